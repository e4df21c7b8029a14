//! Quantile-based measures on discrete laws and their recovery as two-layer
//! measures with an independent environment.
//!
//! Quantiles are lower quantiles `inf{x : F(x) >= α}`. Integrals of the
//! quantile function are evaluated exactly from its breakpoints.

use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionFn, LevelFamily, StateFamilyRule};
use crate::env_measure::{env_risk, EnvMeasureSpec};
use crate::error::{Error, Result};
use crate::model::{check_probability_vector, group_by_key, ConditionalModel, DiscreteDistribution};

/// Discrete probability measure on confidence levels in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevelMeasureRepr")]
pub struct LevelMeasure {
    atoms: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct LevelMeasureRepr {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<LevelMeasureRepr> for LevelMeasure {
    type Error = Error;
    fn try_from(r: LevelMeasureRepr) -> Result<Self> {
        Self::new(r.atoms)
    }
}

impl LevelMeasure {
    /// Atoms `(level, weight)`; repeated levels are merged and zero weights dropped.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&(l, _)) = atoms.iter().find(|(l, _)| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Domain(format!("level {l} outside (0, 1)")));
        }
        let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        check_probability_vector(&weights)?;
        let atoms = group_by_key(atoms)
            .into_iter()
            .map(|(l, ws)| (l, ws.iter().sum::<f64>()))
            .filter(|a| a.1 > 0.0)
            .collect();
        Ok(Self { atoms })
    }

    pub fn point(level: f64) -> Result<Self> {
        Self::new(vec![(level, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level {alpha} outside (0, 1)")))
    }
}

/// Cumulative probabilities `F(x_k)` computed as `1 - P(X > x_k)`, last one exactly 1.
fn cdf_levels(dist: &DiscreteDistribution) -> Vec<f64> {
    let mut f: Vec<f64> = dist.survival_levels().iter().map(|s| 1.0 - s).collect();
    if let Some(last) = f.last_mut() {
        *last = 1.0;
    }
    f
}

/// Lower quantile at `alpha`.
pub fn var(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    // first atom whose upper tail is at most 1 - α, tested the same way the
    // VaR indicator distortion is evaluated
    let survival = dist.survival_levels();
    let k = survival.iter().position(|&s| s <= 1.0 - alpha).unwrap_or(dist.len() - 1);
    Ok(dist.values()[k])
}

/// `∫_lo^hi VaR_θ dθ` for `0 <= lo <= hi <= 1`.
fn quantile_integral(dist: &DiscreteDistribution, lo: f64, hi: f64) -> f64 {
    let mut prev = 0.0f64;
    let mut acc = 0.0;
    for (&x, f) in dist.values().iter().zip(cdf_levels(dist)) {
        let width = f.min(hi) - prev.max(lo);
        if width > 0.0 {
            acc += x * width;
        }
        prev = f;
    }
    acc
}

/// `(1 / (1 - α)) ∫_α^1 VaR_θ dθ`.
pub fn avar(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    Ok(quantile_integral(dist, alpha, 1.0) / (1.0 - alpha))
}

/// `∫ AVaR_θ ν(dθ)`.
pub fn wvar(dist: &DiscreteDistribution, nu: &LevelMeasure) -> f64 {
    nu.atoms()
        .iter()
        .map(|&(l, w)| w * quantile_integral(dist, l, 1.0) / (1.0 - l))
        .sum()
}

/// `(1 / (α2 - α1)) ∫_{α1}^{α2} VaR_θ dθ`.
pub fn rvar(dist: &DiscreteDistribution, alpha1: f64, alpha2: f64) -> Result<f64> {
    check_level(alpha1)?;
    check_level(alpha2)?;
    if alpha1 >= alpha2 {
        return Err(Error::Domain(format!("need α1 < α2, got [{alpha1}, {alpha2}]")));
    }
    Ok(quantile_integral(dist, alpha1, alpha2) / (alpha2 - alpha1))
}

/// Two-layer value (`lhs`) against the classical value (`rhs`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
}

impl RecoveryReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            abs_diff: (lhs - rhs).abs(),
        }
    }
}

/// Model whose environment states are the given levels and whose
/// conditional laws all equal `x`.
fn independent_model(x: &DiscreteDistribution, levels: &[(f64, f64)]) -> Result<ConditionalModel> {
    ConditionalModel::new(levels.iter().map(|&(l, w)| (l, w, x.clone())).collect())
}

/// WVaR as a two-layer measure: states are the levels of `mu`, `g_z = AVaR_z`
/// and `h_Z` the identity.
pub fn wvar_recovery_check(x: &DiscreteDistribution, mu: &LevelMeasure) -> Result<RecoveryReport> {
    let atoms = mu.atoms();
    let lo = atoms.first().map_or(0.5, |a| a.0);
    let hi = atoms.last().map_or(0.5, |a| a.0);
    let spec = EnvMeasureSpec::new(
        StateFamilyRule::level_from_state(LevelFamily::Avar, lo, hi)?,
        DistortionFn::Identity,
    )?;
    let lhs = env_risk(&independent_model(x, atoms)?, &spec)?;
    Ok(RecoveryReport::new(lhs, wvar(x, mu)))
}

/// RVaR as a two-layer measure: the uniform level density on `[α1, α2]` is
/// replaced by `n_states` equally likely cell midpoints, `g_z` is the VaR
/// indicator at level `z` and `h_Z` the identity.
pub fn rvar_recovery_check(x: &DiscreteDistribution, alpha1: f64, alpha2: f64, n_states: usize) -> Result<RecoveryReport> {
    let rhs = rvar(x, alpha1, alpha2)?;
    if n_states == 0 {
        return Err(Error::Domain("n_states must be at least 1".into()));
    }
    let width = (alpha2 - alpha1) / n_states as f64;
    let levels: Vec<(f64, f64)> = (0..n_states)
        .map(|k| (alpha1 + (k as f64 + 0.5) * width, 1.0 / n_states as f64))
        .collect();
    let spec = EnvMeasureSpec::new(
        StateFamilyRule::level_from_state(LevelFamily::Var, alpha1, alpha2)?,
        DistortionFn::Identity,
    )?;
    let lhs = env_risk(&independent_model(x, &levels)?, &spec)?;
    Ok(RecoveryReport::new(lhs, rhs))
}
