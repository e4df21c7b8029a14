//! Seeded generators for random models used by the property suites.
//!
//! Every trial draws from its own ChaCha stream (`seed`, trial index), so the
//! outcome of a suite does not depend on how trials are scheduled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::background::JointLossModel;
use crate::distortion::DistortionFn;
use crate::dual::TwoLayerFiniteModel;
use crate::model::{DiscreteDistribution, LossMatrix, StateSpace};

/// Independent, reproducible stream for one trial.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Flat Dirichlet draw of length `n`.
pub fn probability_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Loss value in `[lo, hi]`; half of the draws are snapped to a coarse grid so
/// that ties appear regularly.
pub fn loss_value<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let v = rng.gen_range(lo..=hi);
    if rng.gen_bool(0.5) {
        (v * 2.0).round() / 2.0
    } else {
        v
    }
}

/// Distribution with `n` random atoms in `[lo, hi]` and random weights.
pub fn distribution<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DiscreteDistribution {
    let values: Vec<f64> = (0..n).map(|_| loss_value(rng, lo, hi)).collect();
    let probs = probability_vector(rng, n);
    DiscreteDistribution::new(&values, &probs).expect("generated distribution is valid")
}

/// Random two-level space with `1..=max_states` states placed strictly inside
/// `(0, 1)` and `1..=max_points` scenario points per state.
pub fn state_space<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_points: usize) -> StateSpace {
    let m = rng.gen_range(1..=max_states);
    let states: Vec<f64> = (0..m)
        .map(|k| 0.02 + 0.96 * (k as f64 + rng.gen_range(0.05..0.95)) / m as f64)
        .collect();
    let state_probs = probability_vector(rng, m);
    let point_probs = (0..m)
        .map(|_| {
            let n = rng.gen_range(1..=max_points);
            probability_vector(rng, n)
        })
        .collect();
    StateSpace::new(states, state_probs, point_probs).expect("generated space is valid")
}

/// Random loss on `space` with values in `[lo, hi]`.
pub fn loss<R: Rng + ?Sized>(rng: &mut R, space: &StateSpace, lo: f64, hi: f64) -> LossMatrix {
    space
        .point_probs()
        .iter()
        .map(|p| (0..p.len()).map(|_| loss_value(rng, lo, hi)).collect())
        .collect()
}

/// Element-wise combination of two losses on the same space.
pub fn zip_loss(a: &[Vec<f64>], b: &[Vec<f64>], f: impl Fn(f64, f64) -> f64) -> LossMatrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| f(x, y)).collect())
        .collect()
}

/// Element-wise transform of a loss.
pub fn map_loss(a: &[Vec<f64>], f: impl Fn(f64) -> f64) -> LossMatrix {
    a.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect()
}

/// Random joint law of `(X, Y)` on `n` atoms. Values sit on a half-integer
/// grid so that distinct atoms regularly share the same `X + Y`.
pub fn joint_model<R: Rng + ?Sized>(rng: &mut R, n: usize) -> JointLossModel {
    let atoms: Vec<(f64, f64, f64)> = probability_vector(rng, n)
        .into_iter()
        .map(|w| {
            let x = (rng.gen_range(-6.0f64..6.0) * 2.0).round() / 2.0;
            let y = (rng.gen_range(-3.0f64..3.0) * 2.0).round() / 2.0;
            (w, x, y)
        })
        .collect();
    JointLossModel::new(&atoms).expect("generated joint model is valid")
}

/// Random concave distortion: identity, AVaR, power or a concave
/// piecewise-linear curve with up to four pieces.
pub fn concave_distortion<R: Rng + ?Sized>(rng: &mut R) -> DistortionFn {
    match rng.gen_range(0..4) {
        0 => DistortionFn::Identity,
        1 => DistortionFn::Avar {
            level: rng.gen_range(0.05..0.95),
        },
        2 => DistortionFn::Power {
            p: rng.gen_range(0.1..1.0),
        },
        _ => {
            let pieces = rng.gen_range(2..=4);
            let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.gen_range(0.05..0.95)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut xs = vec![0.0];
            xs.extend(cuts);
            xs.push(1.0);
            let mut slopes: Vec<f64> = (0..xs.len() - 1).map(|_| rng.gen_range(0.05..3.0)).collect();
            slopes.sort_by(|a, b| b.total_cmp(a));
            let rise: f64 = xs.windows(2).zip(&slopes).map(|(w, s)| (w[1] - w[0]) * s).sum();
            let mut knots = vec![[0.0, 0.0]];
            let mut y = 0.0;
            for (w, s) in xs.windows(2).zip(&slopes) {
                y += (w[1] - w[0]) * s / rise;
                knots.push([w[1], y]);
            }
            knots.last_mut().expect("at least two knots")[1] = 1.0;
            DistortionFn::piecewise_linear(knots).expect("generated knots are valid")
        }
    }
}

/// Random [`TwoLayerFiniteModel`] with concave distortions.
pub fn two_layer_model<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_points: usize) -> TwoLayerFiniteModel {
    let space = state_space(rng, max_states, max_points);
    let inner = (0..space.n_states()).map(|_| concave_distortion(rng)).collect();
    let outer = concave_distortion(rng);
    let x = loss(rng, &space, -10.0, 10.0);
    TwoLayerFiniteModel::new(space, inner, outer, x).expect("generated model is valid")
}
