//! Seeded property suites shared by the command line and the acceptance
//! tests. Each check reports how many cases it ran, how many failed and the
//! worst error it saw.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::background::{build_hL_hR, sandwich_check, tsanakas_gamma, tsanakas_gamma_ls, JointLossModel, SmoothConcaveG};
use crate::choquet::{choquet_distorted, subset_sums};
use crate::classical::{avar, rvar_recovery_check, var, wvar_recovery_check, LevelMeasure};
use crate::distortion::{DistortionFn, LevelFamily, StateFamilyRule};
use crate::dual::{dual_gap_check, DUAL_TOL};
use crate::env_measure::{
    coherence_suite, env_risk, inner_risk, recover_inner_distortion, recover_outer_distortion, EnvMeasureSpec,
    COHERENCE_TOL,
};
use crate::error::{Error, Result};
use crate::model::{check_comonotone, DiscreteDistribution, StateSpace};
use crate::random::{self, trial_rng};

/// Outcome of one check within a suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest error observed; meaning depends on the check.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRow {
    /// Row that passes when every case stays within `tolerance`.
    fn from_errors(check: impl Into<String>, errors: &[f64], tolerance: f64) -> Self {
        let failures = errors.iter().filter(|e| !(**e <= tolerance)).count();
        Self {
            check: check.into(),
            cases: errors.len(),
            failures,
            worst: errors.iter().copied().fold(0.0, f64::max),
            tolerance,
            passed: failures == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<CheckRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} (trials {}, seed {})", self.suite, self.trials, self.seed)?;
        writeln!(f, "{:<56} {:>8} {:>8} {:>12} {:>9}  result", "check", "cases", "failed", "worst", "tol")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<56} {:>8} {:>8} {:>12.3e} {:>9.1e}  {}",
                r.check,
                r.cases,
                r.failures,
                r.worst,
                r.tolerance,
                if r.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Coherence,
    Dual,
    Recovery,
    Background,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Coherence, Suite::Dual, Suite::Recovery, Suite::Background];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Coherence => "coherence",
            Suite::Dual => "dual",
            Suite::Recovery => "recovery",
            Suite::Background => "background",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown suite '{s}' (expected coherence, dual, recovery or background)")))
    }
}

/// Models per dual run; `trials` counts dominated pairs per model.
pub const DUAL_MODELS: usize = 50;

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let rows = match suite {
        Suite::Coherence => {
            let mut rows = coherence_rows(seed, trials)?;
            rows.extend(comonotone_rows(seed, trials, trials.div_ceil(5))?);
            rows
        }
        Suite::Dual => dual_rows(seed, DUAL_MODELS, trials)?,
        Suite::Recovery => {
            let mut rows = distortion_recovery_rows(seed, trials)?;
            rows.extend(wvar_recovery_rows(seed, trials)?);
            rows.extend(rvar_recovery_rows(seed, trials)?);
            rows.extend(classical_identity_rows(seed, trials)?);
            rows
        }
        Suite::Background => background_rows(seed, trials)?,
    };
    Ok(SuiteReport {
        suite,
        trials,
        seed,
        rows,
    })
}

/// Concave specifications exercised by the coherence checks.
pub fn concave_specs() -> Vec<(&'static str, EnvMeasureSpec)> {
    let pwl = DistortionFn::PiecewiseLinear {
        knots: vec![[0.0, 0.0], [0.2, 0.5], [0.6, 0.9], [1.0, 1.0]],
    };
    vec![
        (
            "avar(0.9)/avar(0.8)",
            EnvMeasureSpec::uniform(DistortionFn::Avar { level: 0.9 }, DistortionFn::Avar { level: 0.8 }),
        ),
        (
            "power(0.5)/pwl",
            EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.5 }, pwl),
        ),
        (
            "level-from-state avar/power(0.7)",
            EnvMeasureSpec {
                inner: StateFamilyRule::LevelFromState {
                    family: LevelFamily::Avar,
                    clamp: [0.05, 0.95],
                },
                outer: DistortionFn::Power { p: 0.7 },
            },
        ),
    ]
}

/// Coherence axioms on `trials` random coupled models per concave spec.
pub fn coherence_rows(seed: u64, trials: usize) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (k, (name, spec)) in concave_specs().into_iter().enumerate() {
        let report = coherence_suite(seed.wrapping_add(k as u64), trials, &spec)?;
        for a in report.axioms {
            rows.push(CheckRow {
                check: format!("{} [{name}]", a.axiom),
                cases: a.checks,
                failures: a.violations,
                worst: (-a.worst_slack).max(0.0),
                tolerance: COHERENCE_TOL,
                passed: a.violations == 0,
            });
        }
    }

    // a fresh concave spec for every model
    let mut tally: Vec<(&'static str, usize, usize, f64)> = Vec::new();
    for t in 0..trials {
        let mut rng = trial_rng(seed, 5_000 + t as u64);
        let spec = EnvMeasureSpec::uniform(random::concave_distortion(&mut rng), random::concave_distortion(&mut rng));
        let report = coherence_suite(rng.gen(), 1, &spec)?;
        for (k, a) in report.axioms.iter().enumerate() {
            if tally.len() <= k {
                tally.push((a.axiom, 0, 0, 0.0));
            }
            let slot = &mut tally[k];
            slot.1 += a.checks;
            slot.2 += a.violations;
            slot.3 = slot.3.max(-a.worst_slack);
        }
    }
    for (axiom, checks, violations, worst) in tally {
        rows.push(CheckRow {
            check: format!("{axiom} [random concave specs]"),
            cases: checks,
            failures: violations,
            worst,
            tolerance: COHERENCE_TOL,
            passed: violations == 0,
        });
    }
    Ok(rows)
}

fn any_distortion<R: Rng + ?Sized>(rng: &mut R) -> DistortionFn {
    if rng.gen_bool(0.2) {
        DistortionFn::VarIndicator {
            level: rng.gen_range(0.05..0.95),
        }
    } else {
        random::concave_distortion(rng)
    }
}

/// Loss pair that is comonotone within every state (values sorted along the
/// scenario index).
fn statewise_pair<R: Rng + ?Sized>(rng: &mut R, space: &StateSpace) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let sorted = |l: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        l.into_iter()
            .map(|mut r| {
                r.sort_by(f64::total_cmp);
                r
            })
            .collect()
    };
    (
        sorted(random::loss(rng, space, -10.0, 10.0)),
        sorted(random::loss(rng, space, -10.0, 10.0)),
    )
}

/// Loss pair that is globally comonotone with the environment states ranked
/// in blocks: both losses are increasing functions of a common index that
/// places all scenarios of a state below those of the next one.
fn blockwise_pair<R: Rng + ?Sized>(rng: &mut R, space: &StateSpace) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (a, b) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, probs) in space.point_probs().iter().enumerate() {
        let mut t: Vec<f64> = (0..probs.len()).map(|_| k as f64 + rng.gen_range(0.0..1.0)).collect();
        t.sort_by(f64::total_cmp);
        x.push(t.iter().map(|&t| a * t - 5.0).collect());
        // a step function of the same index keeps ties in y only
        y.push(t.iter().map(|&t| b * (2.0 * t).floor() - 3.0).collect());
    }
    (x, y)
}

/// Additivity on `pairs` state-wise and `pairs` environment-wise comonotone
/// pairs, and strict subadditivity on anti-comonotone pairs.
pub fn comonotone_rows(seed: u64, pairs: usize, anti_pairs: usize) -> Result<Vec<CheckRow>> {
    const TOL: f64 = 1e-10;
    let mut state_errors = Vec::with_capacity(pairs);
    let mut env_errors = Vec::with_capacity(pairs);
    for t in 0..2 * pairs {
        let mut rng = trial_rng(seed, 10_000 + t as u64);
        let space = random::state_space(&mut rng, 6, 6);
        let spec = EnvMeasureSpec::uniform(any_distortion(&mut rng), any_distortion(&mut rng));
        let (x, y) = if t % 2 == 0 {
            statewise_pair(&mut rng, &space)
        } else {
            blockwise_pair(&mut rng, &space)
        };
        let s = random::zip_loss(&x, &y, |a, b| a + b);
        let (mx, my, ms) = (space.model_of(&x)?, space.model_of(&y)?, space.model_of(&s)?);
        let mut worst: f64 = 0.0;
        for k in 0..mx.len() {
            let gap = inner_risk(&ms, k, &spec)? - inner_risk(&mx, k, &spec)? - inner_risk(&my, k, &spec)?;
            worst = worst.max(gap.abs());
        }
        state_errors.push(worst);
        if t % 2 == 1 {
            let px = crate::env_measure::risk_profile(&mx, &spec);
            let py = crate::env_measure::risk_profile(&my, &spec);
            if !check_comonotone(&px.values, &py.values)? {
                return Err(Error::InvalidModel("block construction lost profile comonotonicity".into()));
            }
            let gap = env_risk(&ms, &spec)? - env_risk(&mx, &spec)? - env_risk(&my, &spec)?;
            env_errors.push(gap.abs());
        }
    }

    let strict = EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.5 }, DistortionFn::Power { p: 0.5 });
    let mut strict_cases = 0;
    let mut smallest_gap = f64::INFINITY;
    for t in 0..anti_pairs {
        let mut rng = trial_rng(seed, 20_000 + t as u64);
        let space = random::state_space(&mut rng, 6, 6);
        let x = random::loss(&mut rng, &space, -10.0, 10.0);
        let (c, s) = (rng.gen_range(-5.0..5.0), rng.gen_range(0.2..0.8));
        let y = random::map_loss(&x, |v| c - s * v);
        let sum = random::zip_loss(&x, &y, |a, b| a + b);
        let rho = |l: &[Vec<f64>]| env_risk(&space.model_of(l)?, &strict);
        let gap = rho(&x)? + rho(&y)? - rho(&sum)?;
        smallest_gap = smallest_gap.min(gap);
        if gap > 0.0 {
            strict_cases += 1;
        }
    }
    let needed = (anti_pairs * 95).div_ceil(100);
    Ok(vec![
        CheckRow::from_errors("comonotone additivity, state-wise", &state_errors, TOL),
        CheckRow::from_errors("comonotone additivity, environment-wise", &env_errors, TOL),
        CheckRow {
            check: "anti-comonotone strict gap (cases with gap > 0)".into(),
            cases: anti_pairs,
            failures: anti_pairs - strict_cases,
            worst: smallest_gap,
            tolerance: 0.0,
            passed: strict_cases >= needed,
        },
    ])
}

/// Greedy attainment and weak duality on `models` random concave models.
pub fn dual_rows(seed: u64, models: usize, trials: usize) -> Result<Vec<CheckRow>> {
    let mut weak = Vec::with_capacity(models);
    let mut attain = Vec::with_capacity(models);
    for t in 0..models {
        let mut rng = trial_rng(seed, 30_000 + t as u64);
        let model = random::two_layer_model(&mut rng, 6, 6);
        let r = dual_gap_check(&model, trials, seed.wrapping_add(t as u64 + 1))?;
        weak.push((r.max_random_value - r.env_risk_value).max(0.0));
        attain.push((r.attained_value - r.env_risk_value).abs());
    }
    let mut weak_row = CheckRow::from_errors("random dominated pairs below the measure", &weak, DUAL_TOL);
    weak_row.cases = models * trials;
    Ok(vec![
        weak_row,
        CheckRow::from_errors("nested greedy attains the measure", &attain, DUAL_TOL),
    ])
}

/// Families whose round trip through the black-box recovery is checked.
pub fn recovery_families() -> Vec<(&'static str, DistortionFn)> {
    vec![
        ("identity", DistortionFn::Identity),
        ("avar(0.9)", DistortionFn::Avar { level: 0.9 }),
        ("var(0.75)", DistortionFn::VarIndicator { level: 0.75 }),
        ("power(0.5)", DistortionFn::Power { p: 0.5 }),
        (
            "pwl",
            DistortionFn::PiecewiseLinear {
                knots: vec![[0.0, 0.0], [0.3, 0.6], [1.0, 1.0]],
            },
        ),
    ]
}

/// Resolution of the auxiliary uniform grid used for inner recovery.
pub const RECOVERY_RESOLUTION: usize = 100;
const RECOVERY_TOL: f64 = 1e-12;

/// Inner and outer distortions recovered from the measure on `models`
/// seeded models, compared with the configured ones at every attainable level.
pub fn distortion_recovery_rows(seed: u64, models: usize) -> Result<Vec<CheckRow>> {
    let grid: Vec<f64> = (0..=RECOVERY_RESOLUTION)
        .map(|j| j as f64 / RECOVERY_RESOLUTION as f64)
        .collect();
    let families = recovery_families();
    let mut inner_errors = vec![Vec::new(); families.len() + 1];
    let mut outer_errors = vec![Vec::new(); families.len()];
    for t in 0..models {
        let mut rng = trial_rng(seed, 40_000 + t as u64);
        let space = random::state_space(&mut rng, 6, 6);
        let model = space.model_of(&random::loss(&mut rng, &space, -10.0, 10.0))?;
        let by_state = StateFamilyRule::LevelFromState {
            family: LevelFamily::Avar,
            clamp: [0.05, 0.95],
        };
        let rules = families
            .iter()
            .map(|(_, g)| StateFamilyRule::constant(g.clone()))
            .chain([by_state]);
        for (slot, rule) in rules.enumerate() {
            let spec = EnvMeasureSpec {
                inner: rule,
                outer: DistortionFn::Identity,
            };
            let mut worst: f64 = 0.0;
            for k in 0..model.len() {
                let g = spec.inner.resolve_state(model.states()[k]);
                for (u, got) in recover_inner_distortion(&model, k, &spec, &grid, RECOVERY_RESOLUTION)? {
                    worst = worst.max((got - g.eval(u)?).abs());
                }
            }
            inner_errors[slot].push(worst);
        }

        let levels = subset_sums(model.state_probs().probs());
        for (slot, (_, h)) in families.iter().enumerate() {
            let spec = EnvMeasureSpec::uniform(DistortionFn::Power { p: 0.3 }, h.clone());
            let mut worst: f64 = 0.0;
            for (u, got) in recover_outer_distortion(&model, &spec, &levels)? {
                worst = worst.max((got - h.eval(u)?).abs());
            }
            outer_errors[slot].push(worst);
        }
    }
    let mut rows = Vec::new();
    for (k, errors) in inner_errors.iter().enumerate() {
        let name = families.get(k).map_or("level-from-state avar", |f| f.0);
        rows.push(CheckRow::from_errors(format!("inner recovery [{name}]"), errors, RECOVERY_TOL));
    }
    for ((name, _), errors) in families.iter().zip(&outer_errors) {
        rows.push(CheckRow::from_errors(format!("outer recovery [{name}]"), errors, RECOVERY_TOL));
    }
    Ok(rows)
}

fn random_level_measure<R: Rng + ?Sized>(rng: &mut R) -> Result<LevelMeasure> {
    let n = rng.gen_range(1..=5);
    let w = random::probability_vector(rng, n);
    LevelMeasure::new((0..n).map(|i| (rng.gen_range(0.01..0.99), w[i])).collect())
}

/// WVaR as a two-layer measure on `cases` random (law, level measure) pairs.
pub fn wvar_recovery_rows(seed: u64, cases: usize) -> Result<Vec<CheckRow>> {
    let mut errors = Vec::with_capacity(cases);
    for t in 0..cases {
        let mut rng = trial_rng(seed, 50_000 + t as u64);
        let n = rng.gen_range(1..=50);
        let x = random::distribution(&mut rng, n, -20.0, 20.0);
        let mu = random_level_measure(&mut rng)?;
        errors.push(wvar_recovery_check(&x, &mu)?.abs_diff);
    }
    Ok(vec![CheckRow::from_errors("wvar recovery", &errors, 1e-10)])
}

/// States used by [`rvar_recovery_rows`] on random cases.
pub const RVAR_STATES: usize = 4000;

/// RVaR as a two-layer measure: `cases` random laws at 4000 states, and as
/// many cases on a lattice where every quantile breakpoint is a cell edge.
pub fn rvar_recovery_rows(seed: u64, cases: usize) -> Result<Vec<CheckRow>> {
    let mut random_errors = Vec::with_capacity(cases);
    let mut exact_errors = Vec::with_capacity(cases);
    for t in 0..cases {
        let mut rng = trial_rng(seed, 60_000 + t as u64);
        let x = random::distribution(&mut rng, 20, 0.0, 10.0);
        let a1 = rng.gen_range(0.01..0.7);
        let a2 = rng.gen_range(a1 + 0.05..0.99);
        random_errors.push(rvar_recovery_check(&x, a1, a2, RVAR_STATES)?.abs_diff);

        // probabilities and levels on the lattice k / 20
        const W: usize = 20;
        let atoms = rng.gen_range(1..=8);
        let mut counts = vec![1usize; atoms];
        for _ in atoms..W {
            counts[rng.gen_range(0..atoms)] += 1;
        }
        let values: Vec<f64> = (0..atoms).map(|_| random::loss_value(&mut rng, -10.0, 10.0)).collect();
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let lattice = DiscreteDistribution::new(&values, &weights)?;
        let i = rng.gen_range(1..W - 1);
        let j = rng.gen_range(i + 1..W);
        let per_cell = rng.gen_range(1..=25);
        let report = rvar_recovery_check(&lattice, i as f64 / W as f64, j as f64 / W as f64, per_cell * (j - i))?;
        exact_errors.push(report.abs_diff);
    }
    Ok(vec![
        CheckRow::from_errors(format!("rvar recovery, {RVAR_STATES} states"), &random_errors, 1e-3),
        CheckRow::from_errors("rvar recovery, breakpoints on cell edges", &exact_errors, 1e-12),
    ])
}

/// AVaR and VaR by quantile integration against their distortion forms.
pub fn classical_identity_rows(seed: u64, cases: usize) -> Result<Vec<CheckRow>> {
    let mut avar_errors = Vec::with_capacity(cases);
    let mut var_errors = Vec::with_capacity(cases);
    for t in 0..cases {
        let mut rng = trial_rng(seed, 70_000 + t as u64);
        let n = rng.gen_range(1..=40);
        let x = random::distribution(&mut rng, n, -10.0, 10.0);
        let (mut wa, mut wv): (f64, f64) = (0.0, 0.0);
        for _ in 0..10 {
            let alpha = rng.gen_range(0.001..0.999);
            wa = wa.max((avar(&x, alpha)? - choquet_distorted(&x, &DistortionFn::Avar { level: alpha })).abs());
            wv = wv.max((var(&x, alpha)? - choquet_distorted(&x, &DistortionFn::VarIndicator { level: alpha })).abs());
        }
        avar_errors.push(wa);
        var_errors.push(wv);
    }
    Ok(vec![
        CheckRow::from_errors("avar: quantile integral vs distortion", &avar_errors, 1e-12),
        CheckRow::from_errors("var: lower quantile vs indicator distortion", &var_errors, 1e-12),
    ])
}

/// Sandwich, agreement of the two forms of `Γ`, and `h_L >= h_R` on `models`
/// random joint models for each smooth distortion.
pub fn background_rows(seed: u64, models: usize) -> Result<Vec<CheckRow>> {
    let families = [
        ("quadratic", SmoothConcaveG::Quadratic),
        ("power(0.7)", SmoothConcaveG::Power { p: 0.7 }),
    ];
    let mut rows = Vec::new();
    for (name, g) in families {
        let (mut sandwich, mut forms, mut order) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..models {
            let mut rng = trial_rng(seed, 80_000 + t as u64);
            let n = rng.gen_range(1..=12);
            let model: JointLossModel = random::joint_model(&mut rng, n);
            let r = sandwich_check(&model, &g)?;
            sandwich.push((r.rho_r - r.gamma).max(r.gamma - r.rho_l).max(0.0));
            forms.push((tsanakas_gamma(&model, &g)? - tsanakas_gamma_ls(&model, &g)?).abs());
            let worst = build_hL_hR(&model, &g)?
                .samples()
                .iter()
                .map(|&(_, l, r)| (r - l).max(0.0))
                .fold(0.0, f64::max);
            order.push(worst);
        }
        rows.push(CheckRow::from_errors(format!("rho_R <= Gamma <= rho_L [{name}]"), &sandwich, 1e-9));
        rows.push(CheckRow::from_errors(format!("Gamma expectation vs L_s form [{name}]"), &forms, 1e-9));
        rows.push(CheckRow::from_errors(format!("h_L >= h_R at attainable levels [{name}]"), &order, 0.0));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("nope".parse::<Suite>(), Err(Error::Domain(_))));
    }

    #[test]
    fn small_runs_pass() {
        for s in Suite::ALL {
            let report = run_suite(s, 5, 3).unwrap();
            assert!(report.passed(), "{report}");
            assert!(!report.rows.is_empty());
        }
        assert!(run_suite(Suite::Dual, 0, 3).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run_suite(Suite::Coherence, 20, 9).unwrap();
        let b = run_suite(Suite::Coherence, 20, 9).unwrap();
        assert_eq!(a, b);
    }
}
