//! Choquet integrals on finite supports, against distorted probabilities and
//! against explicit capacities stored by subset bitmask.

use crate::distortion::DistortionFn;
use crate::error::{Error, Result};
use crate::model::{check_probability_vector, DiscreteDistribution};

/// Largest ground set a [`Capacity`] may live on.
pub const MAX_CAPACITY_GROUND: usize = 20;
/// Largest ground set for the exhaustive submodularity check.
pub const MAX_SUBMODULAR_GROUND: usize = 12;

const CAPACITY_TOL: f64 = 1e-12;

/// Monotone, normalized set function on `{0, .., n-1}`; `values[mask]` is
/// the capacity of the subset encoded by `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    n: usize,
    values: Vec<f64>,
}

impl Capacity {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > MAX_CAPACITY_GROUND {
            return Err(Error::TooLarge {
                n,
                max: MAX_CAPACITY_GROUND,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: 1 << n,
            });
        }
        if values[0] != 0.0 || values[(1 << n) - 1] != 1.0 {
            return Err(Error::InvalidModel(
                "capacity must vanish on the empty set and equal one on the full set".into(),
            ));
        }
        for mask in 0..values.len() {
            for i in 0..n {
                let bigger = mask | (1 << i);
                if values[mask] > values[bigger] + CAPACITY_TOL {
                    return Err(Error::InvalidModel(format!(
                        "capacity not monotone between subsets {mask:#b} and {bigger:#b}"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    /// The probability measure `p` itself as a capacity.
    pub fn additive(p: &[f64]) -> Result<Self> {
        distort_probability(p, &DistortionFn::Identity)
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn value(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn full_mask(&self) -> usize {
        (1 << self.n) - 1
    }
}

/// `x_1 + sum_k (x_{k+1} - x_k) g(P(X > x_k))` over the sorted support.
pub fn choquet_distorted(dist: &DiscreteDistribution, g: &DistortionFn) -> f64 {
    let xs = dist.values();
    let survival = dist.survival_levels();
    let mut acc = xs[0];
    for k in 0..xs.len() - 1 {
        acc += (xs[k + 1] - xs[k]) * g.eval_clamped(survival[k].clamp(0.0, 1.0));
    }
    acc
}

/// Choquet integral of the ground-indexed vector `x` against `cap`. Points are
/// visited in decreasing order of `x`, ties broken by index.
pub fn choquet_capacity(x: &[f64], cap: &Capacity) -> Result<f64> {
    if x.len() != cap.ground_size() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: cap.ground_size(),
        });
    }
    let n = x.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));
    let mut mask = 0usize;
    let mut acc = 0.0;
    for w in order.windows(2) {
        mask |= 1 << w[0];
        acc += (x[w[0]] - x[w[1]]) * cap.value(mask);
    }
    acc += x[order[n - 1]] * cap.value(cap.full_mask());
    Ok(acc)
}

/// Subset sums of `p`, indexed by bitmask.
pub(crate) fn subset_sums(p: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; 1 << p.len()];
    for mask in 1..sums.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + p[low];
    }
    sums
}

/// The capacity `A -> g(sum_{i in A} p_i)`.
pub fn distort_probability(p: &[f64], g: &DistortionFn) -> Result<Capacity> {
    if p.len() > MAX_CAPACITY_GROUND {
        return Err(Error::TooLarge {
            n: p.len(),
            max: MAX_CAPACITY_GROUND,
        });
    }
    check_probability_vector(p)?;
    let sums = subset_sums(p);
    let last = sums.len() - 1;
    let values = sums
        .iter()
        .enumerate()
        .map(|(mask, &s)| match mask {
            0 => 0.0,
            m if m == last => 1.0,
            _ => g.eval_clamped(s.clamp(0.0, 1.0)),
        })
        .collect();
    Ok(Capacity { n: p.len(), values })
}

/// `cap(A ∪ B) + cap(A ∩ B) <= cap(A) + cap(B)` for every pair of subsets.
pub fn is_submodular(cap: &Capacity) -> Result<bool> {
    if cap.ground_size() > MAX_SUBMODULAR_GROUND {
        return Err(Error::TooLarge {
            n: cap.ground_size(),
            max: MAX_SUBMODULAR_GROUND,
        });
    }
    let size = 1usize << cap.ground_size();
    for a in 0..size {
        for b in a + 1..size {
            let lhs = cap.value(a | b) + cap.value(a & b);
            if lhs > cap.value(a) + cap.value(b) + CAPACITY_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
