//! A derivative whose loss depends on a lognormal underlying.
//!
//! The environment is `Z = exp(μ + σW)` with `μ = r - σ²/2`, and given
//! `Z = z` the loss is normal with mean `m(1 - z)` and standard deviation
//! `σ₂`, where `m` is the loss multiple (one in the closed form). The inner
//! distortion is AVaR at level `a` in every state, the outer one AVaR at `b`.

use serde::{Deserialize, Serialize};

use crate::distortion::DistortionFn;
use crate::env_measure::{env_risk, EnvMeasureSpec};
use crate::error::{Error, Result};
use crate::model::{ConditionalModel, DiscreteDistribution};
use crate::normal;

/// Absolute tolerance of the integral in [`closed_form_rho`].
pub const CLOSED_FORM_TOL: f64 = 1e-10;
/// Absolute tolerance of the integrals in [`branch_rho`].
pub const BRANCH_TOL: f64 = 1e-13;
/// Cells in the discretization of each conditional normal law.
pub const CONDITIONAL_CELLS: usize = 400;
/// Half-width of the discretized conditional law, in standard deviations.
pub const CONDITIONAL_SPAN: f64 = 8.0;
pub const MIN_PIPELINE_STATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmSpec {
    pub r: f64,
    pub sigma: f64,
    pub sigma2: f64,
    pub a: f64,
    pub b: f64,
    #[serde(default = "unit")]
    pub multiple: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for GbmSpec {
    fn default() -> Self {
        Self {
            r: 0.05,
            sigma: 0.2,
            sigma2: 0.3,
            a: 0.95,
            b: 0.95,
            multiple: 1.0,
        }
    }
}

impl GbmSpec {
    pub fn new(r: f64, sigma: f64, sigma2: f64, a: f64, b: f64) -> Result<Self> {
        let spec = Self {
            r,
            sigma,
            sigma2,
            a,
            b,
            multiple: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if !self.r.is_finite() {
            return fail(format!("return rate {} is not finite", self.r));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("volatility {} must be positive", self.sigma));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return fail(format!("conditional deviation {} must be positive", self.sigma2));
        }
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("level {name} = {v} outside (0, 1)"));
            }
        }
        if !(self.multiple > 0.0 && self.multiple.is_finite()) {
            return fail(format!("multiple {} must be positive", self.multiple));
        }
        Ok(())
    }

    pub fn with_r(self, r: f64) -> Self {
        Self { r, ..self }
    }

    pub fn mu(&self) -> f64 {
        self.r - 0.5 * self.sigma * self.sigma
    }

    /// `σ₂ Φ^{-1}(a) + (σ₂ / (1 - a)) ∫_{Φ^{-1}(a)}^∞ (1 - Φ(x)) dx`, the AVaR
    /// of the centred conditional loss.
    fn inner_loading(&self) -> f64 {
        let q = normal::inv_cdf(self.a);
        let tail = normal::pdf(q) - q * normal::sf(q);
        self.sigma2 * q + self.sigma2 / (1.0 - self.a) * tail
    }

    /// `δ`: the state-wise risk at `z = 0`.
    pub fn delta(&self) -> f64 {
        self.multiple + self.inner_loading()
    }

    /// `Δ = δ - e^{μ + σ Φ^{-1}(1 - b)}`, the sign of which selects the branch
    /// in [`branch_rho`].
    pub fn branch_gap(&self) -> f64 {
        self.delta() - (self.mu() + self.sigma * normal::inv_cdf(1.0 - self.b)).exp()
    }

    fn require_unit_multiple(&self) -> Result<()> {
        if self.multiple == 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "closed form needs multiple 1, got {}",
                self.multiple
            )))
        }
    }
}

/// `ρ_Z(X; z)`.
pub fn inner_rho_z(z: f64, spec: &GbmSpec) -> Result<f64> {
    spec.validate()?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("state {z} must be positive")));
    }
    Ok(spec.multiple * (1.0 - z) + spec.inner_loading())
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let out = quadrature::integrate(f, a, b, tol);
    if out.integral.is_finite() && out.error_estimate <= 100.0 * tol {
        Ok(out.integral)
    } else {
        Err(Error::Numeric(format!(
            "quadrature on [{a}, {b}] did not converge (error estimate {:e})",
            out.error_estimate
        )))
    }
}

/// `∫_{-∞}^{q} Φ(x) e^{σx} dx`, truncated where the integrand is below `1e-17`.
fn lower_integral(q: f64, sigma: f64, tol: f64) -> Result<f64> {
    let f = |x: f64| normal::cdf(x) * (sigma * x).exp();
    let lo = (q - 10.0).min(-40.0);
    let mid = q - 10.0;
    let head = if mid > lo { integrate(f, lo, mid, tol)? } else { 0.0 };
    Ok(head + integrate(f, mid.max(lo), q, tol)?)
}

/// `ρ(X; Z) = δ - e^μ [e^{σ q_b} - (σ / (1 - b)) ∫_{-∞}^{q_b} Φ(x) e^{σx} dx]`
/// with `q_b = Φ^{-1}(1 - b)`.
pub fn closed_form_rho(spec: &GbmSpec) -> Result<f64> {
    spec.validate()?;
    spec.require_unit_multiple()?;
    let q = normal::inv_cdf(1.0 - spec.b);
    let s = spec.sigma;
    let integral = lower_integral(q, s, CLOSED_FORM_TOL)?;
    Ok(spec.delta() - spec.mu().exp() * ((s * q).exp() - s / (1.0 - spec.b) * integral))
}

/// The same value with the integral done by parts:
/// `δ - e^r Φ(q_b - σ) / (1 - b)`.
pub fn analytic_rho(spec: &GbmSpec) -> Result<f64> {
    spec.validate()?;
    spec.require_unit_multiple()?;
    let q = normal::inv_cdf(1.0 - spec.b);
    Ok(spec.delta() - spec.r.exp() * normal::cdf(q - spec.sigma) / (1.0 - spec.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    NonNegativeGap,
    NegativeGap,
}

/// The outer AVaR written as `∫ (h(P(Y > β)) - 1) dβ` over negative `β` plus
/// `∫ h(P(Y > β)) dβ` over positive `β`, with `Y = δ - Z` the risk profile.
/// The distorted tail `h(P(Y > β))` is one below `Δ` and
/// `H(β) = Φ((ln(δ - β) - μ) / σ) / (1 - b)` on `[Δ, δ)`.
pub fn branch_rho(spec: &GbmSpec) -> Result<(f64, Branch)> {
    spec.validate()?;
    spec.require_unit_multiple()?;
    let delta = spec.delta();
    let gap = spec.branch_gap();
    let (mu, s, b) = (spec.mu(), spec.sigma, spec.b);
    let h = move |beta: f64| normal::cdf(((delta - beta).ln() - mu) / s) / (1.0 - b);
    if gap >= 0.0 {
        // ∫_0^Δ 1 dβ + ∫_Δ^δ H
        Ok((gap + integrate(h, gap, delta, BRANCH_TOL)?, Branch::NonNegativeGap))
    } else {
        // ∫_Δ^0 (H - 1) dβ + ∫_0^δ H
        let negative = integrate(|beta| h(beta) - 1.0, gap, 0.0, BRANCH_TOL)?;
        Ok((negative + integrate(h, 0.0, delta, BRANCH_TOL)?, Branch::NegativeGap))
    }
}

/// Standard normal law on `cells` equal cells spanning `±span`, each atom at
/// the conditional mean of its cell.
pub fn normal_grid(cells: usize, span: f64) -> Result<DiscreteDistribution> {
    let edge = |i: usize| -span + 2.0 * span * i as f64 / cells as f64;
    let mut values = Vec::with_capacity(cells);
    let mut probs = Vec::with_capacity(cells);
    for i in 0..cells {
        let (lo, hi) = (edge(i), edge(i + 1));
        // difference of the tail on the side that keeps precision
        let p = if hi <= 0.0 {
            normal::cdf(hi) - normal::cdf(lo)
        } else {
            normal::sf(lo) - normal::sf(hi)
        };
        if p <= 0.0 {
            continue;
        }
        let m = ((normal::pdf(lo) - normal::pdf(hi)) / p).clamp(lo, hi);
        values.push(m);
        probs.push(p);
    }
    DiscreteDistribution::new(&values, &probs)
}

/// `ρ(X; Z)` through the generic two-layer evaluation: `n_states` equally
/// likely lognormal quantiles at midpoint levels, each with a discretized
/// normal conditional law.
pub fn pipeline_rho(spec: &GbmSpec, n_states: usize) -> Result<f64> {
    spec.validate()?;
    if n_states < MIN_PIPELINE_STATES {
        return Err(Error::Domain(format!(
            "need at least {MIN_PIPELINE_STATES} environment states, got {n_states}"
        )));
    }
    let base = normal_grid(CONDITIONAL_CELLS, CONDITIONAL_SPAN)?;
    let w = 1.0 / n_states as f64;
    let entries = (0..n_states)
        .map(|k| {
            let level = (k as f64 + 0.5) * w;
            let z = (spec.mu() + spec.sigma * normal::inv_cdf(level)).exp();
            let shift = spec.multiple * (1.0 - z);
            Ok((z, w, base.map(|x| shift + spec.sigma2 * x)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = ConditionalModel::new(entries)?;
    let measure = EnvMeasureSpec::uniform(DistortionFn::avar(spec.a)?, DistortionFn::avar(spec.b)?);
    env_risk(&model, &measure)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_states: usize,
    pub pipeline: f64,
    pub closed_form: f64,
    pub rel_error: f64,
}

/// Pipeline value against the closed form for each state count.
pub fn convergence_table(spec: &GbmSpec, sizes: &[usize]) -> Result<Vec<ConvergenceRow>> {
    let closed_form = closed_form_rho(spec)?;
    sizes
        .iter()
        .map(|&n| {
            let pipeline = pipeline_rho(spec, n)?;
            Ok(ConvergenceRow {
                n_states: n,
                pipeline,
                closed_form,
                rel_error: ((pipeline - closed_form) / closed_form).abs(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// `(r, ρ)` along the grid.
    pub points: Vec<(f64, f64)>,
    /// Largest `ρ(r_{k+1}) - ρ(r_k)`; negative when strictly decreasing.
    pub worst_step: f64,
    pub decreasing: bool,
}

/// Slack allowed on each step of [`r_monotonicity_check`].
pub const MONOTONICITY_SLACK: f64 = 1e-10;

/// Closed-form risk along a strictly ascending grid of return rates.
pub fn r_monotonicity_check(base: &GbmSpec, r_grid: &[f64]) -> Result<MonotonicityReport> {
    if r_grid.len() < 2 {
        return Err(Error::Domain("return-rate grid needs at least two points".into()));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("return-rate grid must be strictly ascending".into()));
    }
    let points = r_grid
        .iter()
        .map(|&r| Ok((r, closed_form_rho(&base.with_r(r))?)))
        .collect::<Result<Vec<_>>>()?;
    let worst_step = points
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MonotonicityReport {
        decreasing: worst_step < -MONOTONICITY_SLACK,
        points,
        worst_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choquet::choquet_distorted;
    use crate::classical::avar;
    use gauss_quad::GaussLegendre;

    fn composite_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let rule = GaussLegendre::new(20.try_into().unwrap());
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| rule.integrate(a + i as f64 * h, a + (i + 1) as f64 * h, &f))
            .sum()
    }

    #[test]
    fn inner_examples() {
        let spec = GbmSpec::default();
        let v = inner_rho_z(1.0, &spec).unwrap();
        assert!((v - 0.61881).abs() <= 1e-4, "{v}");
        // AVaR of N(0, σ₂²) in closed form
        let q = normal::inv_cdf(0.95);
        assert!((v - 0.3 * normal::pdf(q) / 0.05).abs() <= 1e-12);

        for (z, z2) in [(0.5, 1.7), (1.0, 3.0), (0.01, 0.02)] {
            let d = inner_rho_z(z, &spec).unwrap() - inner_rho_z(z2, &spec).unwrap();
            assert!((d - (z2 - z)).abs() <= 1e-12);
        }

        let half = GbmSpec { a: 0.5, ..spec };
        let q = normal::inv_cdf(0.5);
        let tail = integrate(normal::sf, q, q + 40.0, 1e-13).unwrap();
        let direct = 0.3 * q + 0.3 / 0.5 * tail;
        assert!((inner_rho_z(1.0, &half).unwrap() - direct).abs() <= 1e-10);

        assert!(inner_rho_z(0.0, &spec).is_err());
        assert!(inner_rho_z(-1.0, &spec).is_err());
    }

    #[test]
    fn inner_matches_discretized_choquet() {
        let spec = GbmSpec::default();
        let grid = normal_grid(CONDITIONAL_CELLS, CONDITIONAL_SPAN).unwrap();
        for z in [0.5, 1.0, 1.4] {
            let law = grid.map(|x| (1.0 - z) + 0.3 * x).unwrap();
            let c = choquet_distorted(&law, &DistortionFn::Avar { level: 0.95 });
            assert!((c - inner_rho_z(z, &spec).unwrap()).abs() <= 2e-4);
            assert!((c - avar(&law, 0.95).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn closed_form_examples() {
        let spec = GbmSpec::default();
        let cf = closed_form_rho(&spec).unwrap();
        assert!((cf - analytic_rho(&spec).unwrap()).abs() <= 1e-10);

        let q = normal::inv_cdf(0.05);
        let f = |x: f64| normal::cdf(x) * (0.2 * x).exp();
        let gl = composite_gl(f, -80.0, q, 400);
        let oracle = spec.delta() - spec.mu().exp() * ((0.2 * q).exp() - 0.2 / 0.05 * gl);
        assert!((cf - oracle).abs() <= 1e-8, "{cf} vs {oracle}");

        let flat = GbmSpec { r: 0.0, sigma: 1e-4, ..spec };
        let limit = inner_rho_z(1.0, &flat).unwrap();
        assert!((closed_form_rho(&flat).unwrap() - limit).abs() <= 1e-3);

        let scaled = GbmSpec { multiple: 2.0, ..spec };
        assert!(matches!(closed_form_rho(&scaled), Err(Error::Domain(_))));
        assert!(closed_form_rho(&GbmSpec { b: 1.0, ..spec }).is_err());
    }

    #[test]
    fn branches_agree_across_the_gap_sign() {
        let base = GbmSpec::default();
        let r0 = base.delta().ln() - 0.2 * normal::inv_cdf(0.05) + 0.02;
        let mut seen = Vec::new();
        for dr in [-0.2, -0.05, -1e-3, 1e-3, 0.05, 0.2] {
            let spec = base.with_r(r0 + dr);
            let (v, branch) = branch_rho(&spec).unwrap();
            assert!((v - closed_form_rho(&spec).unwrap()).abs() <= 1e-10, "r = {}", spec.r);
            seen.push(branch);
        }
        assert!(seen.contains(&Branch::NonNegativeGap) && seen.contains(&Branch::NegativeGap));
        let (v, _) = branch_rho(&base).unwrap();
        assert!((v - closed_form_rho(&base).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn pipeline_examples() {
        let spec = GbmSpec::default();
        let cf = closed_form_rho(&spec).unwrap();
        let table = convergence_table(&spec, &[100, 200, 500, 1000, 2000]).unwrap();
        assert!(table.last().unwrap().rel_error < 5e-3, "{table:?}");
        for w in table.windows(2) {
            assert!(w[1].rel_error < w[0].rel_error, "{table:?}");
        }
        assert_eq!(pipeline_rho(&spec, 300).unwrap(), pipeline_rho(&spec, 300).unwrap());
        assert!((table[0].closed_form - cf).abs() == 0.0);

        let flat = GbmSpec { r: 0.0, sigma: 1e-6, ..spec };
        let limit = inner_rho_z(1.0, &flat).unwrap();
        assert!((pipeline_rho(&flat, 200).unwrap() - limit).abs() <= 1e-3);

        assert!(pipeline_rho(&spec, 99).is_err());
        // other multiples scale the profile around the discretized loading
        let loading = avar(&normal_grid(CONDITIONAL_CELLS, CONDITIONAL_SPAN).unwrap().map(|x| 0.3 * x).unwrap(), 0.95).unwrap();
        let scaled = GbmSpec { multiple: 2.0, ..spec };
        let (p1, p2) = (pipeline_rho(&spec, 100).unwrap(), pipeline_rho(&scaled, 100).unwrap());
        assert!((p2 - (2.0 * p1 - loading)).abs() <= 1e-9);
    }

    #[test]
    fn monotone_in_return_rate() {
        let spec = GbmSpec::default();
        let rep = r_monotonicity_check(&spec, &[-0.05, 0.0, 0.05, 0.1]).unwrap();
        assert!(rep.decreasing, "{rep:?}");
        let pair = r_monotonicity_check(&spec, &[0.0, 0.1]).unwrap();
        assert!(pair.points[0].1 > pair.points[1].1);
        assert!(r_monotonicity_check(&spec, &[0.1, 0.1, 0.1]).is_err());
        assert!(r_monotonicity_check(&spec, &[0.1]).is_err());
        assert!(r_monotonicity_check(&spec, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn spec_json() {
        let s: GbmSpec = serde_json::from_str(r#"{"r":0.05,"sigma":0.2,"sigma2":0.3,"a":0.95,"b":0.95}"#).unwrap();
        assert_eq!(s, GbmSpec::default());
    }
}
