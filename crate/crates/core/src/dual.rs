//! Dual representation of the two-layer measure on small finite spaces.
//!
//! For concave distortions the measure is the largest repeated integral
//! `Σ_z Q1(z) Σ_ω Q2(z, ω) x(z, ω)` over probability vectors `Q1` dominated
//! by `h ∘ P_Z` and `Q2(z, ·)` dominated by `g_z ∘ K(z, ·)`. Greedy vertices
//! of the domination polytopes attain it.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::choquet::{distort_probability, subset_sums, Capacity};
use crate::distortion::{DistortionFn, StateFamilyRule, TableEntry};
use crate::env_measure::{env_risk, EnvMeasureSpec, CONCAVITY_GRID};
use crate::error::{Error, Result};
use crate::model::{LossMatrix, StateSpace};
use crate::random;

/// Largest number of states or points per state in a [`TwoLayerFiniteModel`].
pub const MAX_DUAL_GROUND: usize = 8;
/// Largest ground set for [`verify_dominated`].
pub const MAX_DOMINATION_GROUND: usize = 12;
pub const DOMINATION_TOL: f64 = 1e-12;
pub const DUAL_TOL: f64 = 1e-9;

/// Loss on a small two-level space with a concave distortion per state and
/// a concave outer distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerFiniteModel {
    space: StateSpace,
    inner: Vec<DistortionFn>,
    outer: DistortionFn,
    loss: LossMatrix,
}

impl TwoLayerFiniteModel {
    pub fn new(space: StateSpace, inner: Vec<DistortionFn>, outer: DistortionFn, loss: LossMatrix) -> Result<Self> {
        space.check_loss(&loss)?;
        if inner.len() != space.n_states() {
            return Err(Error::LengthMismatch {
                left: inner.len(),
                right: space.n_states(),
            });
        }
        let widest = space.point_probs().iter().map(Vec::len).max().unwrap_or(0);
        for n in [space.n_states(), widest] {
            if n > MAX_DUAL_GROUND {
                return Err(Error::TooLarge { n, max: MAX_DUAL_GROUND });
            }
        }
        if loss.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("loss values must be finite".into()));
        }
        for g in inner.iter().chain([&outer]) {
            g.validate()?;
            if !g.is_concave(CONCAVITY_GRID) {
                return Err(Error::NonConcave);
            }
        }
        Ok(Self {
            space,
            inner,
            outer,
            loss,
        })
    }

    /// Resolves the inner family of `spec` on the states of `space`.
    pub fn from_spec(space: StateSpace, spec: &EnvMeasureSpec, loss: LossMatrix) -> Result<Self> {
        let inner = space.states().iter().map(|&z| spec.inner.resolve_state(z)).collect();
        Self::new(space, inner, spec.outer.clone(), loss)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn inner(&self) -> &[DistortionFn] {
        &self.inner
    }

    pub fn outer(&self) -> &DistortionFn {
        &self.outer
    }

    pub fn loss(&self) -> &LossMatrix {
        &self.loss
    }

    /// Primal value `ρ(X; Z)`.
    pub fn env_risk(&self) -> Result<f64> {
        let spec = EnvMeasureSpec {
            inner: StateFamilyRule::Table {
                entries: self
                    .space
                    .states()
                    .iter()
                    .zip(&self.inner)
                    .map(|(&state, g)| TableEntry {
                        state,
                        distortion: g.clone(),
                    })
                    .collect(),
                default: DistortionFn::Identity,
            },
            outer: self.outer.clone(),
        };
        env_risk(&self.space.model_of(&self.loss)?, &spec)
    }
}

/// Greedy vertex for the order in which `order` lists the points.
fn greedy_for_order(p: &[f64], g: &DistortionFn, order: &[usize]) -> Vec<f64> {
    let mut q = vec![0.0; p.len()];
    let mut cum = 0.0;
    let mut prev = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cum += p[i];
        let level = if k + 1 == order.len() { 1.0 } else { g.eval_clamped(cum.clamp(0.0, 1.0)) };
        q[i] = level - prev;
        prev = level;
    }
    q
}

/// The vertex of `{q : q(A) <= g(P(A))}` that visits points by decreasing
/// `x`, ties in index order.
pub fn greedy_core_measure(p: &[f64], g: &DistortionFn, x: &[f64]) -> Result<Vec<f64>> {
    if p.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: x.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !g.is_concave(CONCAVITY_GRID) {
        return Err(Error::NonConcave);
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));
    Ok(greedy_for_order(p, g, &order))
}

fn dominated_by(q: &[f64], cap: &Capacity) -> bool {
    let total: f64 = q.iter().sum();
    if q.iter().any(|&v| !(v >= -DOMINATION_TOL)) || (total - 1.0).abs() > DUAL_TOL {
        return false;
    }
    subset_sums(q)
        .iter()
        .zip(cap.values())
        .all(|(qa, ga)| *qa <= ga + DOMINATION_TOL)
}

/// Whether `q` is a probability vector with `q(A) <= g(P(A))` for every subset.
pub fn verify_dominated(q: &[f64], p: &[f64], g: &DistortionFn) -> Result<bool> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: p.len(),
        });
    }
    if p.len() > MAX_DOMINATION_GROUND {
        return Err(Error::TooLarge {
            n: p.len(),
            max: MAX_DOMINATION_GROUND,
        });
    }
    Ok(dominated_by(q, &distort_probability(p, g)?))
}

/// `Σ_z Q1(z) Σ_ω Q2(z, ω) x(z, ω)` for a dominated pair.
pub fn dual_value(model: &TwoLayerFiniteModel, q1: &[f64], q2: &[Vec<f64>]) -> Result<f64> {
    let space = &model.space;
    if q2.len() != space.n_states() {
        return Err(Error::LengthMismatch {
            left: q2.len(),
            right: space.n_states(),
        });
    }
    if !verify_dominated(q1, space.state_probs(), &model.outer)? {
        return Err(Error::NotDominated);
    }
    for ((q, p), g) in q2.iter().zip(space.point_probs()).zip(&model.inner) {
        if !verify_dominated(q, p, g)? {
            return Err(Error::NotDominated);
        }
    }
    Ok(repeated_integral(&model.loss, q1, q2))
}

fn repeated_integral(loss: &[Vec<f64>], q1: &[f64], q2: &[Vec<f64>]) -> f64 {
    q1.iter()
        .zip(q2)
        .zip(loss)
        .map(|((a, q), row)| a * q.iter().zip(row).map(|(b, x)| b * x).sum::<f64>())
        .sum()
}

/// Greedy pair: inner vertices ordered by the loss in each state, outer
/// vertex ordered by the resulting state-wise values.
pub fn nested_greedy(model: &TwoLayerFiniteModel) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let space = &model.space;
    let q2 = space
        .point_probs()
        .iter()
        .zip(&model.inner)
        .zip(&model.loss)
        .map(|((p, g), x)| greedy_core_measure(p, g, x))
        .collect::<Result<Vec<_>>>()?;
    let profile: Vec<f64> = q2
        .iter()
        .zip(&model.loss)
        .map(|(q, x)| q.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let q1 = greedy_core_measure(space.state_probs(), &model.outer, &profile)?;
    Ok((q1, q2))
}

/// A random element of the domination polytope of `cap`: a flat Dirichlet
/// draw mixed with the greedy vertex of a random order, pulled towards the
/// vertex until it is dominated.
pub fn random_dominated<R: Rng + ?Sized>(rng: &mut R, p: &[f64], g: &DistortionFn, cap: &Capacity) -> Vec<f64> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.shuffle(rng);
    let vertex = greedy_for_order(p, g, &order);
    let draw = random::probability_vector(rng, p.len());
    let mut lambda = 1.0;
    for _ in 0..60 {
        let q: Vec<f64> = draw.iter().zip(&vertex).map(|(d, v)| lambda * d + (1.0 - lambda) * v).collect();
        if dominated_by(&q, cap) {
            return q;
        }
        lambda *= 0.5;
    }
    vertex
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualGapReport {
    pub trials: usize,
    pub max_random_value: f64,
    pub attained_value: f64,
    pub env_risk_value: f64,
    pub ok: bool,
}

/// Weak duality on `trials` random dominated pairs and attainment by the
/// nested greedy pair.
pub fn dual_gap_check(model: &TwoLayerFiniteModel, trials: usize, seed: u64) -> Result<DualGapReport> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let space = &model.space;
    let outer_cap = distort_probability(space.state_probs(), &model.outer)?;
    let inner_caps = space
        .point_probs()
        .iter()
        .zip(&model.inner)
        .map(|(p, g)| distort_probability(p, g))
        .collect::<Result<Vec<_>>>()?;

    let trial = |t: usize| {
        let mut rng = random::trial_rng(seed, t as u64);
        let q1 = random_dominated(&mut rng, space.state_probs(), &model.outer, &outer_cap);
        let q2: Vec<Vec<f64>> = space
            .point_probs()
            .iter()
            .zip(&model.inner)
            .zip(&inner_caps)
            .map(|((p, g), cap)| random_dominated(&mut rng, p, g, cap))
            .collect();
        repeated_integral(&model.loss, &q1, &q2)
    };
    #[cfg(feature = "parallel")]
    let max_random_value = (0..trials).into_par_iter().map(trial).reduce(|| f64::NEG_INFINITY, f64::max);
    #[cfg(not(feature = "parallel"))]
    let max_random_value = (0..trials).map(trial).fold(f64::NEG_INFINITY, f64::max);

    let (q1, q2) = nested_greedy(model)?;
    let attained_value = dual_value(model, &q1, &q2)?;
    let env_risk_value = model.env_risk()?;
    Ok(DualGapReport {
        trials,
        max_random_value,
        attained_value,
        env_risk_value,
        ok: max_random_value <= env_risk_value + DUAL_TOL && (attained_value - env_risk_value).abs() <= DUAL_TOL,
    })
}
