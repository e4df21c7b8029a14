//! Risk of a loss `X` measured in the presence of a background loss `Y`,
//! using the aggregate `Z = X + Y` as environment.
//!
//! With `φ(Z) = E[X | Z]` and a concave distortion `g`, the distribution
//! function `s(z) = 1 - g(P(Z > z))` induces a measure `L_s` on the support
//! of `Z`. Two outer distortions `h_L >= h_R` are read off the pair
//! `u(β) = P_Z(φ > β)`, `v(β) = L_s(φ > β)`, and the allocation
//! `Γ = E_{L_s}[φ(Z)]` sits between the two resulting measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{group_by_key, same_point, DiscreteDistribution, ScenarioTable};

/// Smooth increasing concave distortion with a closed-form derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", try_from = "SmoothRepr")]
pub enum SmoothConcaveG {
    Identity,
    Power { p: f64 },
    Quadratic,
}

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
enum SmoothRepr {
    Identity,
    Power { p: f64 },
    Quadratic,
}

impl TryFrom<SmoothRepr> for SmoothConcaveG {
    type Error = Error;
    fn try_from(r: SmoothRepr) -> Result<Self> {
        let g = match r {
            SmoothRepr::Identity => Self::Identity,
            SmoothRepr::Power { p } => Self::Power { p },
            SmoothRepr::Quadratic => Self::Quadratic,
        };
        g.validate()?;
        Ok(g)
    }
}

impl SmoothConcaveG {
    pub fn power(p: f64) -> Result<Self> {
        let g = Self::Power { p };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Power { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::InvalidDistortion(format!("power exponent {p} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// `g(u)` for `u` in `[0, 1]`; inputs are clamped.
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match *self {
            Self::Identity => u,
            Self::Power { p } => u.powf(p),
            Self::Quadratic => 1.0 - (1.0 - u) * (1.0 - u),
        }
    }

    /// `g'(u)`; infinite for the power family at zero.
    pub fn derivative(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match *self {
            Self::Identity => 1.0,
            Self::Power { p } => p * u.powf(p - 1.0),
            Self::Quadratic => 2.0 * (1.0 - u),
        }
    }
}

/// One value of the aggregate loss with its probability and `E[X | Z = z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZAtom {
    pub z: f64,
    pub prob: f64,
    pub phi: f64,
}

/// Joint law of `(X, Y)` on finitely many weighted atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLossModel {
    /// `(probability, x, y)`, probabilities normalized.
    atoms: Vec<(f64, f64, f64)>,
    /// Index into `z_atoms` for each atom.
    group: Vec<usize>,
    z_atoms: Vec<ZAtom>,
}

impl JointLossModel {
    /// Atoms `(weight, x, y)`.
    pub fn new(atoms: &[(f64, f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, &(w, x, y)) in atoms.iter().enumerate() {
            if !(w.is_finite() && x.is_finite() && y.is_finite()) {
                return Err(Error::NonFiniteValue { index });
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index, weight: w });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        if total <= 0.0 {
            return Err(Error::ZeroTotalWeight);
        }
        let atoms: Vec<(f64, f64, f64)> = atoms.iter().map(|&(w, x, y)| (w / total, x, y)).collect();
        let groups = group_by_key(atoms.iter().enumerate().map(|(i, a)| (a.1 + a.2, i)).collect());

        let mut group = vec![0; atoms.len()];
        let mut z_atoms = Vec::new();
        for (z, members) in groups {
            let prob: f64 = members.iter().map(|&i| atoms[i].0).sum();
            if prob <= 0.0 {
                continue;
            }
            let phi = members.iter().map(|&i| atoms[i].0 * atoms[i].1).sum::<f64>() / prob;
            for &i in &members {
                group[i] = z_atoms.len();
            }
            z_atoms.push(ZAtom { z, prob, phi });
        }
        Ok(Self { atoms, group, z_atoms })
    }

    /// Uses the `x` and `y` columns; the table's own environment column is ignored.
    pub fn from_table(table: &ScenarioTable) -> Result<Self> {
        if !table.has_y() {
            return Err(Error::InvalidModel("background risk needs a y column".into()));
        }
        let atoms: Vec<(f64, f64, f64)> = table
            .rows()
            .iter()
            .map(|r| (r.weight, r.x, r.y.unwrap_or(0.0)))
            .collect();
        Self::new(&atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64, f64)] {
        &self.atoms
    }

    pub fn z_atoms(&self) -> &[ZAtom] {
        &self.z_atoms
    }

    pub fn z_marginal(&self) -> DiscreteDistribution {
        let z: Vec<f64> = self.z_atoms.iter().map(|a| a.z).collect();
        let p: Vec<f64> = self.z_atoms.iter().map(|a| a.prob).collect();
        DiscreteDistribution::new(&z, &p).expect("z atoms are valid")
    }

    pub fn mean_x(&self) -> f64 {
        self.atoms.iter().map(|a| a.0 * a.1).sum()
    }

    /// `P(Z > z_k)` per z atom, accumulated from the top.
    fn z_survival(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.z_atoms.len()];
        let mut acc = 0.0;
        for k in (0..self.z_atoms.len()).rev() {
            out[k] = acc;
            acc += self.z_atoms[k].prob;
        }
        out
    }
}

/// `E[X | Z = z]`.
pub fn phi(model: &JointLossModel, z: f64) -> Result<f64> {
    model
        .z_atoms
        .iter()
        .find(|a| same_point(a.z, z))
        .map(|a| a.phi)
        .ok_or(Error::StateNotInSupport(z))
}

/// Jumps of `s = 1 - g(P(Z > ·))` at each z atom, in z order.
fn ls_masses(model: &JointLossModel, g: &SmoothConcaveG) -> Result<Vec<f64>> {
    let survival = model.z_survival();
    let mut above = 1.0;
    let masses: Vec<f64> = survival
        .iter()
        .map(|&s| {
            let m = g.eval(above) - g.eval(s);
            above = s;
            m
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidModel(format!("L_s has total mass {total}")));
    }
    Ok(masses)
}

/// The measure `L_s` as a law on the support of `Z`.
pub fn ls_measure(model: &JointLossModel, g: &SmoothConcaveG) -> Result<DiscreteDistribution> {
    let masses = ls_masses(model, g)?;
    let z: Vec<f64> = model.z_atoms.iter().map(|a| a.z).collect();
    DiscreteDistribution::new(&z, &masses)
}

/// Distinct values `φ_1 < ... < φ_r` with `U_j = P_Z(φ > φ_j)` and
/// `V_j = L_s(φ > φ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiLevels {
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn phi_levels(model: &JointLossModel, masses: &[f64]) -> PhiLevels {
    let groups = group_by_key(
        model
            .z_atoms
            .iter()
            .zip(masses)
            .map(|(a, &m)| (a.phi, (a.prob, m)))
            .collect(),
    );
    let r = groups.len();
    let (mut u, mut v) = (vec![0.0; r], vec![0.0; r]);
    let (mut acc_u, mut acc_v) = (0.0, 0.0);
    for j in (0..r).rev() {
        u[j] = acc_u;
        v[j] = acc_v;
        for &(p, m) in &groups[j].1 {
            acc_u += p;
            acc_v += m;
        }
    }
    PhiLevels {
        phi: groups.iter().map(|g| g.0).collect(),
        u,
        v,
    }
}

/// Sampled `h_L` and `h_R` together with the step functions they come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HPair {
    pub levels: PhiLevels,
}

impl HPair {
    /// `h_L(p) = v(u^{-1}(p))` with `u^{-1}(p) = inf{β : u(β) <= p}`.
    pub fn h_left(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return 1.0;
        }
        let l = &self.levels;
        l.u.iter().position(|&uj| uj <= p).map_or(0.0, |j| l.v[j])
    }

    /// `h_R(p) = v(u^{-1+}(p))` with `u^{-1+}(p) = inf{β : u(β) < p}`.
    pub fn h_right(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return 1.0;
        }
        let l = &self.levels;
        l.u.iter().position(|&uj| uj < p).map_or(0.0, |j| l.v[j])
    }

    /// `(p, h_L(p), h_R(p))` at every attainable level `p` of `u`, descending.
    pub fn samples(&self) -> Vec<(f64, f64, f64)> {
        std::iter::once(1.0)
            .chain(self.levels.u.iter().copied())
            .map(|p| (p, self.h_left(p), self.h_right(p)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    L,
    R,
}

#[allow(non_snake_case)]
pub fn build_hL_hR(model: &JointLossModel, g: &SmoothConcaveG) -> Result<HPair> {
    let masses = ls_masses(model, g)?;
    Ok(HPair {
        levels: phi_levels(model, &masses),
    })
}

/// `ρ_h(X; Z) = φ_1 + Σ (φ_{j+1} - φ_j) h(U_j)` with `h = h_L` or `h_R`.
pub fn rho_background(model: &JointLossModel, g: &SmoothConcaveG, side: Side) -> Result<f64> {
    let h = build_hL_hR(model, g)?;
    let l = &h.levels;
    let mut acc = l.phi[0];
    for j in 0..l.phi.len() - 1 {
        let hu = match side {
            Side::L => h.h_left(l.u[j]),
            Side::R => h.h_right(l.u[j]),
        };
        acc += (l.phi[j + 1] - l.phi[j]) * hu;
    }
    Ok(acc)
}

/// `Γ(X; Y)` as an expectation over the atoms of `(X, Y)`, weighting each
/// atom by the density of `L_s` with respect to the law of `Z`. For a
/// continuous `Z` this density is `g'(P(Z > z))`.
pub fn tsanakas_gamma(model: &JointLossModel, g: &SmoothConcaveG) -> Result<f64> {
    let masses = ls_masses(model, g)?;
    Ok(model
        .atoms
        .iter()
        .zip(&model.group)
        .map(|(&(w, x, _), &k)| w * x * masses[k] / model.z_atoms[k].prob)
        .sum())
}

/// `Γ(X; Y) = ∫_{-∞}^0 (L_s(φ > β) - 1) dβ + ∫_0^∞ L_s(φ > β) dβ`, evaluated
/// over the breakpoints of `φ`.
pub fn tsanakas_gamma_ls(model: &JointLossModel, g: &SmoothConcaveG) -> Result<f64> {
    let masses = ls_masses(model, g)?;
    let l = phi_levels(model, &masses);
    let mut acc = l.phi[0];
    for j in 0..l.phi.len() - 1 {
        acc += (l.phi[j + 1] - l.phi[j]) * l.v[j];
    }
    Ok(acc)
}

/// `E[X g'(P(Z > Z))]` evaluated literally with the survival function taken
/// at each atom. On atomic `Z` this differs from [`tsanakas_gamma`] and may
/// be infinite when `g'(0)` is.
pub fn tsanakas_gamma_derivative(model: &JointLossModel, g: &SmoothConcaveG) -> f64 {
    let survival = model.z_survival();
    model
        .atoms
        .iter()
        .zip(&model.group)
        .filter(|(a, _)| a.1 != 0.0)
        .map(|(&(w, x, _), &k)| w * x * g.derivative(survival[k]))
        .sum()
}

pub const SANDWICH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    pub rho_r: f64,
    pub gamma: f64,
    pub rho_l: f64,
    /// `Γ` recomputed from `L_s(φ > ·)`.
    pub gamma_ls: f64,
    pub ok: bool,
}

/// Checks `ρ_R <= Γ <= ρ_L` and agreement of the two forms of `Γ`.
pub fn sandwich_check(model: &JointLossModel, g: &SmoothConcaveG) -> Result<SandwichReport> {
    let rho_r = rho_background(model, g, Side::R)?;
    let rho_l = rho_background(model, g, Side::L)?;
    let gamma = tsanakas_gamma(model, g)?;
    let gamma_ls = tsanakas_gamma_ls(model, g)?;
    let ok = rho_r <= gamma + SANDWICH_TOL
        && gamma <= rho_l + SANDWICH_TOL
        && (gamma - gamma_ls).abs() <= SANDWICH_TOL;
    Ok(SandwichReport {
        rho_r,
        gamma,
        rho_l,
        gamma_ls,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenarioRow;
    use crate::random;
    use proptest::prelude::*;

    fn z_equals_x() -> JointLossModel {
        JointLossModel::new(&[(1.0, 0.0, 0.0), (1.0, 1.0, 0.0)]).unwrap()
    }

    #[test]
    fn phi_examples() {
        let m = z_equals_x();
        assert_eq!(phi(&m, 0.0).unwrap(), 0.0);
        assert_eq!(phi(&m, 1.0).unwrap(), 1.0);
        let pooled = JointLossModel::new(&[(1.0, 1.0, 1.0), (1.0, 3.0, -1.0)]).unwrap();
        assert_eq!(phi(&pooled, 2.0).unwrap(), 2.0);
        let shifted = JointLossModel::new(&[(1.0, 1.0, 2.5), (2.0, 4.0, 2.5), (1.0, -3.0, 2.5)]).unwrap();
        for a in shifted.z_atoms() {
            assert!((a.phi - (a.z - 2.5)).abs() <= 1e-12);
        }
        assert_eq!(phi(&m, 0.5), Err(Error::StateNotInSupport(0.5)));
    }

    #[test]
    fn ls_measure_examples() {
        let mut rng = random::trial_rng(1, 0);
        let m = random::joint_model(&mut rng, 9);
        let ls = ls_measure(&m, &SmoothConcaveG::Identity).unwrap();
        let zm = m.z_marginal();
        assert_eq!(ls.values(), zm.values());
        for (a, b) in ls.probs().iter().zip(zm.probs()) {
            assert!((a - b).abs() <= 1e-12);
        }

        let ls = ls_measure(&z_equals_x(), &SmoothConcaveG::Quadratic).unwrap();
        assert_eq!(ls.values(), &[0.0, 1.0]);
        assert_eq!(ls.probs(), &[0.25, 0.75]);

        let point = JointLossModel::new(&[(2.0, 1.0, 1.0)]).unwrap();
        let ls = ls_measure(&point, &SmoothConcaveG::power(0.5).unwrap()).unwrap();
        assert_eq!((ls.values(), ls.probs()), (&[2.0][..], &[1.0][..]));
    }

    #[test]
    fn h_pair_examples() {
        let h = build_hL_hR(&z_equals_x(), &SmoothConcaveG::Identity).unwrap();
        assert_eq!(h.h_left(0.5), 0.5);
        assert_eq!(h.h_right(0.5), 0.0);
        assert_eq!(h.h_left(0.0), 0.0);
        assert_eq!(h.h_right(0.0), 0.0);
        assert_eq!(h.h_left(1.0), 1.0);
        assert_eq!(h.samples(), vec![(1.0, 1.0, 1.0), (0.5, 0.5, 0.0), (0.0, 0.0, 0.0)]);
    }

    #[test]
    fn rho_background_examples() {
        let id = SmoothConcaveG::Identity;
        assert_eq!(rho_background(&z_equals_x(), &id, Side::L).unwrap(), 0.5);
        assert_eq!(rho_background(&z_equals_x(), &id, Side::R).unwrap(), 0.0);
        let constant = JointLossModel::new(&[(1.0, 3.0, 0.0), (2.0, 3.0, 5.0), (1.0, 3.0, -2.0)]).unwrap();
        for g in [id, SmoothConcaveG::Quadratic, SmoothConcaveG::power(0.3).unwrap()] {
            for side in [Side::L, Side::R] {
                assert!((rho_background(&constant, &g, side).unwrap() - 3.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gamma_examples() {
        let mut rng = random::trial_rng(2, 0);
        let m = random::joint_model(&mut rng, 12);
        assert!((tsanakas_gamma(&m, &SmoothConcaveG::Identity).unwrap() - m.mean_x()).abs() <= 1e-12);
        assert!((tsanakas_gamma_derivative(&m, &SmoothConcaveG::Identity) - m.mean_x()).abs() <= 1e-12);

        assert_eq!(tsanakas_gamma_derivative(&z_equals_x(), &SmoothConcaveG::Quadratic), 1.0);
        // the atom-wise density form keeps Γ inside the sandwich
        assert_eq!(tsanakas_gamma(&z_equals_x(), &SmoothConcaveG::Quadratic).unwrap(), 0.75);
        assert_eq!(rho_background(&z_equals_x(), &SmoothConcaveG::Quadratic, Side::L).unwrap(), 0.75);

        let constant = JointLossModel::new(&[(1.0, 2.0, 0.0), (1.0, 2.0, 1.0), (3.0, 2.0, 4.0)]).unwrap();
        let ls_total: f64 = ls_measure(&constant, &SmoothConcaveG::Quadratic).unwrap().probs().iter().sum();
        assert!((ls_total - 1.0).abs() <= 1e-12);
        assert!((tsanakas_gamma(&constant, &SmoothConcaveG::Quadratic).unwrap() - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn sandwich_examples() {
        let r = sandwich_check(&z_equals_x(), &SmoothConcaveG::Identity).unwrap();
        assert_eq!((r.rho_r, r.gamma, r.rho_l, r.ok), (0.0, 0.5, 0.5, true));

        for trial in 0..200 {
            let mut rng = random::trial_rng(11, trial);
            let m = random::joint_model(&mut rng, 10);
            let r = sandwich_check(&m, &SmoothConcaveG::Quadratic).unwrap();
            assert!(r.ok, "trial {trial}: {r:?}");
            let id = sandwich_check(&m, &SmoothConcaveG::Identity).unwrap();
            assert!(id.ok && (id.gamma - m.mean_x()).abs() <= 1e-12);
        }
    }

    #[test]
    fn from_table_and_json() {
        let rows = vec![
            ScenarioRow { weight: 1.0, x: 0.0, z: 9.0, y: Some(0.0) },
            ScenarioRow { weight: 1.0, x: 1.0, z: 9.0, y: Some(0.0) },
        ];
        let m = JointLossModel::from_table(&ScenarioTable::new(rows).unwrap()).unwrap();
        assert_eq!(m, z_equals_x());
        let no_y = ScenarioTable::new(vec![ScenarioRow { weight: 1.0, x: 0.0, z: 0.0, y: None }]).unwrap();
        assert!(matches!(JointLossModel::from_table(&no_y), Err(Error::InvalidModel(_))));

        let g: SmoothConcaveG = serde_json::from_str(r#"{"family":"power","p":0.7}"#).unwrap();
        assert_eq!(g, SmoothConcaveG::Power { p: 0.7 });
        let q: SmoothConcaveG = serde_json::from_str(r#"{"family":"quadratic"}"#).unwrap();
        assert_eq!(q, SmoothConcaveG::Quadratic);
        assert!(serde_json::from_str::<SmoothConcaveG>(r#"{"family":"power","p":1.5}"#).is_err());
        assert!(serde_json::from_str::<SmoothConcaveG>(r#"{"family":"pwl"}"#).is_err());
    }

    fn any_g() -> impl Strategy<Value = SmoothConcaveG> {
        prop_oneof![
            Just(SmoothConcaveG::Identity),
            Just(SmoothConcaveG::Quadratic),
            (0.05f64..0.95).prop_map(|p| SmoothConcaveG::Power { p }),
        ]
    }

    proptest! {
        #[test]
        fn ls_is_probability(seed in 0u64..5000, g in any_g()) {
            let m = random::joint_model(&mut random::trial_rng(seed, 0), 10);
            let total: f64 = ls_masses(&m, &g).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn left_dominates_right(seed in 0u64..5000, g in any_g()) {
            let m = random::joint_model(&mut random::trial_rng(seed, 1), 10);
            let h = build_hL_hR(&m, &g).unwrap();
            for (_, l, r) in h.samples() {
                prop_assert!(l >= r);
            }
        }

        #[test]
        fn sandwich_holds(seed in 0u64..5000, g in any_g()) {
            let m = random::joint_model(&mut random::trial_rng(seed, 2), 10);
            let r = sandwich_check(&m, &g).unwrap();
            prop_assert!(r.ok, "{:?}", r);
            prop_assert!(r.rho_r <= r.rho_l + 1e-12);
        }

        #[test]
        fn phi_tower(seed in 0u64..5000) {
            let m = random::joint_model(&mut random::trial_rng(seed, 3), 10);
            let e: f64 = m.z_atoms().iter().map(|a| a.prob * a.phi).sum();
            prop_assert!((e - m.mean_x()).abs() <= 1e-12);
        }
    }
}
