//! The state-wise measure `ρ_Z(X; z)` and the environment-wise measure
//! `ρ(X; Z)`, distortion recovery from black-box functionals, and the
//! coherence suite.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choquet::choquet_distorted;
use crate::distortion::{DistortionFn, StateFamilyRule};
use crate::error::{Error, Result};
use crate::model::{ConditionalModel, DiscreteDistribution, StateSpace};
use crate::random;

/// Grid size used whenever a distortion must be classified as concave.
pub const CONCAVITY_GRID: usize = 201;

/// Inner family `{g_z}` and outer distortion `h_Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMeasureSpec {
    pub inner: StateFamilyRule,
    pub outer: DistortionFn,
}

impl EnvMeasureSpec {
    pub fn new(inner: StateFamilyRule, outer: DistortionFn) -> Result<Self> {
        let spec = Self { inner, outer };
        spec.validate()?;
        Ok(spec)
    }

    /// The same distortion in every state and for the environment.
    pub fn uniform(inner: DistortionFn, outer: DistortionFn) -> Self {
        Self {
            inner: StateFamilyRule::constant(inner),
            outer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        self.outer.validate()
    }

    pub fn is_concave(&self) -> bool {
        self.outer.is_concave(CONCAVITY_GRID) && self.inner.is_concave(CONCAVITY_GRID)
    }
}

/// State-wise risks together with the environment law they are aggregated under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskProfile {
    pub states: Vec<f64>,
    pub state_probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl RiskProfile {
    /// Law of the profile under the environment probability, equal risks merged.
    pub fn law(&self) -> Result<DiscreteDistribution> {
        DiscreteDistribution::new(&self.values, &self.state_probs)
    }

    /// Choquet integral of the profile against `outer ∘ P_Z`.
    pub fn aggregate(&self, outer: &DistortionFn) -> Result<f64> {
        Ok(choquet_distorted(&self.law()?, outer))
    }
}

/// `ρ_Z(X; z)` for the state at `z_index`.
pub fn inner_risk(model: &ConditionalModel, z_index: usize, spec: &EnvMeasureSpec) -> Result<f64> {
    let len = model.len();
    let cond = model
        .conditionals()
        .get(z_index)
        .ok_or(Error::IndexOutOfRange { index: z_index, len })?;
    let g = spec.inner.resolve_state(model.states()[z_index]);
    Ok(choquet_distorted(cond, &g))
}

fn state_risk(model: &ConditionalModel, spec: &EnvMeasureSpec, k: usize) -> f64 {
    choquet_distorted(&model.conditionals()[k], &spec.inner.resolve_state(model.states()[k]))
}

/// `ρ_Z(X; z)` for every state.
pub fn risk_profile(model: &ConditionalModel, spec: &EnvMeasureSpec) -> RiskProfile {
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = if model.len() >= 512 {
        (0..model.len()).into_par_iter().map(|k| state_risk(model, spec, k)).collect()
    } else {
        (0..model.len()).map(|k| state_risk(model, spec, k)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = (0..model.len()).map(|k| state_risk(model, spec, k)).collect();

    RiskProfile {
        states: model.states().to_vec(),
        state_probs: model.state_probs().probs().to_vec(),
        values,
    }
}

/// `ρ(X; Z)`: the outer Choquet integral of the risk profile.
pub fn env_risk(model: &ConditionalModel, spec: &EnvMeasureSpec) -> Result<f64> {
    risk_profile(model, spec).aggregate(&spec.outer)
}

/// `ρ(X; Z)` for a loss defined on a coupled [`StateSpace`].
pub fn env_risk_on(space: &StateSpace, loss: &[Vec<f64>], spec: &EnvMeasureSpec) -> Result<f64> {
    env_risk(&space.model_of(loss)?, spec)
}

/// A risk functional evaluated in a single environment state, given the
/// conditional law of the loss in that state.
pub trait StateRiskFunctional {
    fn risk(&self, state: f64, law: &DiscreteDistribution) -> f64;
}

impl<F: Fn(f64, &DiscreteDistribution) -> f64> StateRiskFunctional for F {
    fn risk(&self, state: f64, law: &DiscreteDistribution) -> f64 {
        self(state, law)
    }
}

impl StateRiskFunctional for EnvMeasureSpec {
    fn risk(&self, state: f64, law: &DiscreteDistribution) -> f64 {
        choquet_distorted(law, &self.inner.resolve_state(state))
    }
}

/// Samples the distortion behind a state-wise functional.
///
/// The state's scenario space is extended by an independent uniform variable
/// `U` on `resolution` equally likely midpoints of `[0, 1]`; the value at `u`
/// is the functional applied to the indicator loss `1{U > 1 - u}`. Each `u`
/// must be a multiple of `1 / resolution`.
pub fn recover_inner_distortion(
    model: &ConditionalModel,
    z_index: usize,
    blackbox: &dyn StateRiskFunctional,
    grid: &[f64],
    resolution: usize,
) -> Result<Vec<(f64, f64)>> {
    if z_index >= model.len() {
        return Err(Error::IndexOutOfRange {
            index: z_index,
            len: model.len(),
        });
    }
    if resolution == 0 {
        return Err(Error::Domain("uniform grid resolution must be positive".into()));
    }
    let z = model.states()[z_index];
    let m = resolution as f64;
    let midpoints: Vec<f64> = (0..resolution).map(|j| (j as f64 + 0.5) / m).collect();
    let counts = vec![1.0; resolution];

    grid.iter()
        .map(|&u| {
            let k = (u * m).round();
            if !(0.0..=m).contains(&k) || (u * m - k).abs() > 1e-9 {
                return Err(Error::GridNotAttainable(u));
            }
            let threshold = 1.0 - u;
            let indicator: Vec<f64> = midpoints.iter().map(|&t| if t > threshold { 1.0 } else { 0.0 }).collect();
            // x plays no role: the indicator depends on U alone
            let law = DiscreteDistribution::new(&indicator, &counts)?;
            Ok((u, blackbox.risk(z, &law)))
        })
        .collect()
}

/// Subset of state indices whose probabilities sum to `level` within `1e-12`.
fn states_with_mass(probs: &[f64], level: f64) -> Option<Vec<usize>> {
    const TOL: f64 = 1e-12;
    let m = probs.len();
    if m <= 20 {
        (0u32..1 << m).find_map(|mask| {
            let idx: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            let s: f64 = idx.iter().map(|&i| probs[i]).sum();
            ((s - level).abs() <= TOL).then_some(idx)
        })
    } else {
        let mut acc = 0.0;
        let mut idx = Vec::new();
        if level.abs() <= TOL {
            return Some(idx);
        }
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            idx.push(i);
            if (acc - level).abs() <= TOL {
                return Some(idx);
            }
        }
        None
    }
}

/// Samples the outer distortion: `ĥ(u) = ρ(1_B(Z); Z)` for a set of states
/// `B` with `P_Z(B) = u`. Returns `(P_Z(B), ĥ)` pairs, the first entry being
/// the mass the outer integral assigns to `B`.
pub fn recover_outer_distortion(
    model: &ConditionalModel,
    spec: &EnvMeasureSpec,
    levels: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let probs = model.state_probs().probs();
    levels
        .iter()
        .map(|&u| {
            let chosen = states_with_mass(probs, u).ok_or(Error::LevelNotAttainable(u))?;
            let mut inside = vec![false; probs.len()];
            for &i in &chosen {
                inside[i] = true;
            }
            let entries = model
                .states()
                .iter()
                .zip(probs)
                .zip(&inside)
                .map(|((&z, &p), &b)| Ok((z, p, DiscreteDistribution::degenerate(if b { 1.0 } else { 0.0 })?)))
                .collect::<Result<Vec<_>>>()?;
            let profile = risk_profile(&ConditionalModel::new(entries)?, spec);
            // the level exactly as the outer integral sees it
            let law = profile.law()?;
            Ok((law.survival(0.5), choquet_distorted(&law, &spec.outer)))
        })
        .collect()
}

/// Violation tally for one coherence axiom. `worst_slack` is the smallest
/// observed margin (negative values are violations beyond rounding).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomTally {
    pub axiom: &'static str,
    pub checks: usize,
    pub violations: usize,
    pub worst_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub seed: u64,
    pub trials: usize,
    pub axioms: Vec<AxiomTally>,
}

impl CoherenceReport {
    pub fn total_violations(&self) -> usize {
        self.axioms.iter().map(|a| a.violations).sum()
    }
}

pub const COHERENCE_TOL: f64 = 1e-9;

struct TrialSlacks {
    monotone: f64,
    translation: f64,
    homogeneity: f64,
    subadditive: f64,
}

fn coherence_trial(seed: u64, trial: usize, spec: &EnvMeasureSpec) -> Result<TrialSlacks> {
    let mut rng = random::trial_rng(seed, trial as u64);
    let space = random::state_space(&mut rng, 6, 6);
    let x = random::loss(&mut rng, &space, -10.0, 10.0);
    let y = random::loss(&mut rng, &space, -10.0, 10.0);
    let bump = random::map_loss(&random::loss(&mut rng, &space, 0.0, 5.0), f64::abs);
    let shift = rng.gen_range(-5.0..5.0);
    let scale = rng.gen_range(0.1..5.0);

    let rho = |loss: &[Vec<f64>]| env_risk_on(&space, loss, spec);
    let rx = rho(&x)?;
    let ry = rho(&y)?;
    let rxy = rho(&random::zip_loss(&x, &y, |a, b| a + b))?;
    let r_up = rho(&random::zip_loss(&x, &bump, |a, b| a + b))?;
    let r_shift = rho(&random::map_loss(&x, |a| a + shift))?;
    let r_scale = rho(&random::map_loss(&x, |a| a * scale))?;

    Ok(TrialSlacks {
        monotone: r_up - rx,
        translation: -(r_shift - rx - shift).abs(),
        homogeneity: -(r_scale - scale * rx).abs() / (scale * rx).abs().max(1.0),
        subadditive: rx + ry - rxy,
    })
}

/// Checks monotonicity, translation invariance, positive homogeneity and
/// subadditivity of `ρ(·; Z)` on `trials` random coupled models. Requires a
/// concave outer distortion and concave inner distortions.
pub fn coherence_suite(seed: u64, trials: usize, spec: &EnvMeasureSpec) -> Result<CoherenceReport> {
    spec.validate()?;
    if !spec.outer.is_concave(CONCAVITY_GRID) {
        return Err(Error::NonConcaveSpec("outer distortion".into()));
    }
    if !spec.inner.is_concave(CONCAVITY_GRID) {
        return Err(Error::NonConcaveSpec("inner family".into()));
    }

    #[cfg(feature = "parallel")]
    let results: Vec<Result<TrialSlacks>> = (0..trials).into_par_iter().map(|t| coherence_trial(seed, t, spec)).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<TrialSlacks>> = (0..trials).map(|t| coherence_trial(seed, t, spec)).collect();

    let names = ["monotonicity", "translation-invariance", "positive-homogeneity", "subadditivity"];
    let mut axioms: Vec<AxiomTally> = names
        .iter()
        .map(|&axiom| AxiomTally {
            axiom,
            checks: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
        })
        .collect();
    for r in results {
        let s = r?;
        for (tally, slack) in axioms
            .iter_mut()
            .zip([s.monotone, s.translation, s.homogeneity, s.subadditive])
        {
            tally.checks += 1;
            tally.worst_slack = tally.worst_slack.min(slack);
            if slack < -COHERENCE_TOL {
                tally.violations += 1;
            }
        }
    }
    Ok(CoherenceReport { seed, trials, axioms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::LevelFamily;
    use crate::model::{build_conditional_model, build_distribution, check_comonotone, Binning, ScenarioRow, ScenarioTable};
    use proptest::prelude::*;
    use rand::Rng;

    fn two_state_model(k0: DiscreteDistribution, k1: DiscreteDistribution) -> ConditionalModel {
        ConditionalModel::new(vec![(0.0, 0.5, k0), (1.0, 0.5, k1)]).unwrap()
    }

    fn dist(values: &[f64], probs: &[f64]) -> DiscreteDistribution {
        build_distribution(values, probs).unwrap()
    }

    #[test]
    fn inner_risk_examples() {
        let model = two_state_model(dist(&[1.0, 3.0], &[0.5, 0.5]), dist(&[0.0, 10.0], &[0.5, 0.5]));
        let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
        assert_eq!(inner_risk(&model, 0, &identity).unwrap(), 2.0);

        let avar = EnvMeasureSpec::uniform(DistortionFn::Avar { level: 0.5 }, DistortionFn::Identity);
        assert_eq!(inner_risk(&model, 1, &avar).unwrap(), 10.0);

        let point = two_state_model(DiscreteDistribution::degenerate(4.0).unwrap(), dist(&[0.0], &[1.0]));
        let spec = EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.3 }, DistortionFn::Identity);
        assert_eq!(inner_risk(&point, 0, &spec).unwrap(), 4.0);

        assert_eq!(
            inner_risk(&model, 2, &identity),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        );
    }

    #[test]
    fn profile_examples() {
        let model = two_state_model(dist(&[1.0, 3.0], &[0.5, 0.5]), dist(&[0.0, 10.0], &[0.5, 0.5]));
        let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
        let profile = risk_profile(&model, &identity);
        assert_eq!(profile.values, vec![2.0, 5.0]);
        assert_eq!(profile.state_probs, vec![0.5, 0.5]);

        let single = ConditionalModel::new(vec![(3.0, 1.0, dist(&[1.0], &[1.0]))]).unwrap();
        assert_eq!(risk_profile(&single, &identity).values.len(), 1);
    }

    #[test]
    fn env_risk_examples() {
        let model = two_state_model(DiscreteDistribution::degenerate(0.0).unwrap(), DiscreteDistribution::degenerate(10.0).unwrap());
        let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
        assert_eq!(env_risk(&model, &identity).unwrap(), 5.0);

        let sup_like = EnvMeasureSpec::uniform(
            DistortionFn::Identity,
            DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 1.0], [1.0, 1.0]]).unwrap(),
        );
        assert_eq!(env_risk(&model, &sup_like).unwrap(), 10.0);

        let single = ConditionalModel::new(vec![(0.3, 1.0, dist(&[0.0, 10.0], &[0.5, 0.5]))]).unwrap();
        let spec = EnvMeasureSpec::new(
            StateFamilyRule::level_from_state(LevelFamily::Avar, 0.01, 0.99).unwrap(),
            DistortionFn::Power { p: 0.2 },
        )
        .unwrap();
        assert_eq!(env_risk(&single, &spec).unwrap(), inner_risk(&single, 0, &spec).unwrap());
    }

    #[test]
    fn recover_inner_examples() {
        let model = two_state_model(dist(&[1.0, 3.0], &[0.5, 0.5]), dist(&[0.0, 10.0], &[0.5, 0.5]));
        let spec = EnvMeasureSpec::uniform(DistortionFn::Avar { level: 0.75 }, DistortionFn::Identity);
        let got = recover_inner_distortion(&model, 0, &spec, &[0.0, 0.25, 0.5, 1.0], 100).unwrap();
        let values: Vec<f64> = got.iter().map(|p| p.1).collect();
        assert_eq!(values, vec![0.0, 1.0, 1.0, 1.0]);

        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
        for (u, g) in recover_inner_distortion(&model, 1, &identity, &grid, 100).unwrap() {
            assert!((u - g).abs() <= 1e-12);
        }

        let sqrt = EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.5 }, DistortionFn::Identity);
        let got = recover_inner_distortion(&model, 0, &sqrt, &[0.25], 100).unwrap();
        assert!((got[0].1 - 0.5).abs() <= 1e-12);

        assert_eq!(
            recover_inner_distortion(&model, 0, &sqrt, &[0.123], 100),
            Err(Error::GridNotAttainable(0.123))
        );
    }

    #[test]
    fn recover_inner_with_closure_blackbox() {
        let model = two_state_model(dist(&[1.0], &[1.0]), dist(&[2.0], &[1.0]));
        let worst_case = |_z: f64, law: &DiscreteDistribution| law.max();
        let got = recover_inner_distortion(&model, 1, &worst_case, &[0.0, 0.1, 1.0], 10).unwrap();
        assert_eq!(got.iter().map(|p| p.1).collect::<Vec<_>>(), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn recover_outer_examples() {
        let four = ConditionalModel::new(
            (0..4).map(|i| (i as f64, 1.0, dist(&[i as f64, 7.0], &[0.3, 0.7]))).collect(),
        )
        .unwrap();
        let identity = EnvMeasureSpec::uniform(DistortionFn::Avar { level: 0.3 }, DistortionFn::Identity);
        for (u, h) in recover_outer_distortion(&four, &identity, &[0.25, 0.5, 0.75]).unwrap() {
            assert!((u - h).abs() <= 1e-12);
        }
        let avar = EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.4 }, DistortionFn::Avar { level: 0.5 });
        let got = recover_outer_distortion(&four, &avar, &[0.25, 1.0]).unwrap();
        assert!((got[0].1 - 0.5).abs() <= 1e-12);
        assert_eq!(got[1].1, 1.0);
        assert_eq!(
            recover_outer_distortion(&four, &avar, &[0.3]),
            Err(Error::LevelNotAttainable(0.3))
        );
    }

    #[test]
    fn coherence_suite_examples() {
        let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
        assert_eq!(coherence_suite(7, 500, &identity).unwrap().total_violations(), 0);

        let avar = EnvMeasureSpec::uniform(DistortionFn::Avar { level: 0.9 }, DistortionFn::Avar { level: 0.8 });
        let report = coherence_suite(7, 500, &avar).unwrap();
        assert_eq!(report.total_violations(), 0, "{report:?}");
        assert!(report.axioms.iter().all(|a| a.checks == 500));

        let var = EnvMeasureSpec::uniform(DistortionFn::VarIndicator { level: 0.9 }, DistortionFn::Identity);
        assert!(matches!(coherence_suite(7, 10, &var), Err(Error::NonConcaveSpec(_))));
        let var_outer = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::VarIndicator { level: 0.9 });
        assert!(matches!(coherence_suite(7, 10, &var_outer), Err(Error::NonConcaveSpec(_))));
    }

    #[test]
    fn continuity_from_below_on_truncations() {
        // X ∧ n increases to X and reaches it after at most max|X| steps
        let mut rng = random::trial_rng(3, 0);
        let spec = EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.6 }, DistortionFn::Avar { level: 0.4 });
        for _ in 0..50 {
            let space = random::state_space(&mut rng, 5, 5);
            let x = random::loss(&mut rng, &space, 0.0, 12.0);
            let target = env_risk_on(&space, &x, &spec).unwrap();
            let top = x.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).ceil() as usize;
            let mut prev = f64::NEG_INFINITY;
            for n in 0..=top {
                let capped = random::map_loss(&x, |v| v.min(n as f64));
                let r = env_risk_on(&space, &capped, &spec).unwrap();
                assert!(r >= prev - 1e-12);
                prev = r;
            }
            assert!((prev - target).abs() <= 1e-12);
        }
    }

    #[test]
    fn tower_collapse_on_tables() {
        let rows = vec![
            ScenarioRow { weight: 1.0, x: 1.0, z: 0.0, y: None },
            ScenarioRow { weight: 2.5, x: -3.0, z: 0.0, y: None },
            ScenarioRow { weight: 0.5, x: 8.0, z: 1.0, y: None },
            ScenarioRow { weight: 1.0, x: 2.0, z: 4.0, y: None },
        ];
        let table = ScenarioTable::new(rows).unwrap();
        let model = build_conditional_model(&table, Binning::DistinctValues).unwrap();
        let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
        assert!((env_risk(&model, &identity).unwrap() - table.mean_x()).abs() <= 1e-12);
    }

    fn spec_strategy() -> impl Strategy<Value = EnvMeasureSpec> {
        let d = prop_oneof![
            Just(DistortionFn::Identity),
            (0.05f64..0.95).prop_map(|level| DistortionFn::Avar { level }),
            (0.05f64..0.95).prop_map(|level| DistortionFn::VarIndicator { level }),
            (0.1f64..=1.0).prop_map(|p| DistortionFn::Power { p }),
        ];
        (d.clone(), d, any::<bool>()).prop_map(|(inner, outer, by_state)| EnvMeasureSpec {
            inner: if by_state {
                StateFamilyRule::LevelFromState { family: LevelFamily::Avar, clamp: [0.05, 0.95] }
            } else {
                StateFamilyRule::constant(inner)
            },
            outer,
        })
    }

    proptest! {
        #[test]
        fn normalization(seed in 0u64..1000, spec in spec_strategy()) {
            let mut rng = random::trial_rng(seed, 1);
            let space = random::state_space(&mut rng, 6, 6);
            let ones = random::map_loss(&random::loss(&mut rng, &space, 0.0, 1.0), |_| 1.0);
            prop_assert_eq!(env_risk_on(&space, &ones, &spec).unwrap(), 1.0);
        }

        #[test]
        fn tower_collapse(seed in 0u64..1000) {
            let mut rng = random::trial_rng(seed, 2);
            let space = random::state_space(&mut rng, 6, 6);
            let x = random::loss(&mut rng, &space, -10.0, 10.0);
            let identity = EnvMeasureSpec::uniform(DistortionFn::Identity, DistortionFn::Identity);
            let mean: f64 = space.state_probs().iter().zip(space.point_probs()).zip(&x)
                .map(|((pz, pp), row)| pz * pp.iter().zip(row).map(|(p, v)| p * v).sum::<f64>())
                .sum();
            prop_assert!((env_risk_on(&space, &x, &identity).unwrap() - mean).abs() <= 1e-12);
        }

        #[test]
        fn degenerate_environment(seed in 0u64..1000, spec in spec_strategy()) {
            let mut rng = random::trial_rng(seed, 3);
            let pooled = random::distribution(&mut rng, 8, -5.0, 5.0);
            let z = 0.37;
            let model = ConditionalModel::new(vec![(z, 1.0, pooled.clone())]).unwrap();
            let direct = choquet_distorted(&pooled, &spec.inner.resolve_state(z));
            prop_assert_eq!(env_risk(&model, &spec).unwrap(), direct);
        }

        #[test]
        fn law_invariance_under_state_permutation(seed in 0u64..1000, spec in spec_strategy()) {
            // the level-from-state rule ties g_z to z, so permute with a state-free inner rule
            let spec = EnvMeasureSpec { inner: StateFamilyRule::constant(spec.inner.resolve_state(0.5)), outer: spec.outer };
            let mut rng = random::trial_rng(seed, 4);
            let m = rng.gen_range(1..7);
            let laws: Vec<DiscreteDistribution> = (0..m).map(|_| random::distribution(&mut rng, 4, -5.0, 5.0)).collect();
            let probs = random::probability_vector(&mut rng, m);
            let model = ConditionalModel::new((0..m).map(|i| (i as f64, probs[i], laws[i].clone())).collect()).unwrap();
            let rev = ConditionalModel::new((0..m).map(|i| ((m - 1 - i) as f64, probs[i], laws[i].clone())).collect()).unwrap();
            let a = env_risk(&model, &spec).unwrap();
            let b = env_risk(&rev, &spec).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_profile(seed in 0u64..1000, spec in spec_strategy()) {
            let mut rng = random::trial_rng(seed, 5);
            let space = random::state_space(&mut rng, 6, 6);
            let x = random::loss(&mut rng, &space, -10.0, 10.0);
            let y = random::loss(&mut rng, &space, -10.0, 10.0);
            let px = risk_profile(&space.model_of(&x).unwrap(), &spec);
            let py = risk_profile(&space.model_of(&y).unwrap(), &spec);
            if px.values.iter().zip(&py.values).all(|(a, b)| a <= b) {
                prop_assert!(px.aggregate(&spec.outer).unwrap() <= py.aggregate(&spec.outer).unwrap() + 1e-12);
            }
            let upper = RiskProfile {
                values: px.values.iter().map(|v| v + rng.gen_range(0.0..2.0)).collect(),
                ..px.clone()
            };
            prop_assert!(px.aggregate(&spec.outer).unwrap() <= upper.aggregate(&spec.outer).unwrap() + 1e-12);
        }

        #[test]
        fn statewise_comonotone_additivity(seed in 0u64..1000, spec in spec_strategy()) {
            let mut rng = random::trial_rng(seed, 6);
            let space = random::state_space(&mut rng, 6, 6);
            // sorting both losses within each state makes them comonotone there
            let sorted = |l: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                l.into_iter().map(|mut r| { r.sort_by(f64::total_cmp); r }).collect()
            };
            let x = sorted(random::loss(&mut rng, &space, -10.0, 10.0));
            let y = sorted(random::loss(&mut rng, &space, -10.0, 10.0));
            let s = random::zip_loss(&x, &y, |a, b| a + b);
            let (mx, my, ms) = (space.model_of(&x).unwrap(), space.model_of(&y).unwrap(), space.model_of(&s).unwrap());
            for k in 0..mx.len() {
                let lhs = inner_risk(&ms, k, &spec).unwrap();
                let rhs = inner_risk(&mx, k, &spec).unwrap() + inner_risk(&my, k, &spec).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10);
            }
            let (px, py) = (risk_profile(&mx, &spec), risk_profile(&my, &spec));
            if check_comonotone(&px.values, &py.values).unwrap() {
                let lhs = env_risk(&ms, &spec).unwrap();
                let rhs = env_risk(&mx, &spec).unwrap() + env_risk(&my, &spec).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10);
            }
        }
    }
}
