//! Discrete probability model: loss distributions, scenario tables and the
//! conditional decomposition of a loss given a finitely-valued environment.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two support points are treated as one atom.
pub const MERGE_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn same_point(anchor: f64, v: f64) -> bool {
    (v - anchor).abs() <= MERGE_TOL * anchor.abs().max(1.0)
}

/// Groups `(key, payload)` pairs by key after sorting, merging keys that are
/// equal within [`MERGE_TOL`] of the group's first key.
pub(crate) fn group_by_key<T>(mut items: Vec<(f64, T)>) -> Vec<(f64, Vec<T>)> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, Vec<T>)> = Vec::new();
    for (k, payload) in items {
        match groups.last_mut() {
            Some((anchor, members)) if same_point(*anchor, k) => members.push(payload),
            _ => groups.push((k, vec![payload])),
        }
    }
    groups
}

/// A finitely supported law: strictly increasing support with positive
/// probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Canonicalizes weighted points: sorts, merges duplicates, drops
    /// zero-weight atoms and normalizes.
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: weights.len(),
            });
        }
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, (&v, &w)) in values.iter().zip(weights).enumerate() {
            if !v.is_finite() || !w.is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index, weight: w });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroTotalWeight);
        }
        let items = values.iter().copied().zip(weights.iter().copied()).collect();
        let mut out_values = Vec::new();
        let mut out_probs = Vec::new();
        for (v, ws) in group_by_key(items) {
            let w: f64 = ws.iter().sum();
            if w > 0.0 {
                out_values.push(v);
                out_probs.push(w);
            }
        }
        let total: f64 = out_probs.iter().sum();
        if total != 1.0 {
            for p in &mut out_probs {
                *p /= total;
            }
        }
        Ok(Self {
            values: out_values,
            probs: out_probs,
        })
    }

    /// Point mass at `c`.
    pub fn degenerate(c: f64) -> Result<Self> {
        Self::new(&[c], &[1.0])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// `P(X > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        match self.values.partition_point(|&v| v <= t) {
            0 => 1.0,
            k => self.probs[k..].iter().rev().sum(),
        }
    }

    /// `P(X > x_k)` for every support point, accumulated from the top atom
    /// down. The last entry is always zero.
    pub fn survival_levels(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut acc = 0.0;
        for k in (0..self.len()).rev() {
            out[k] = acc;
            acc += self.probs[k];
        }
        out
    }

    /// Law of `f(X)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mapped: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        Self::new(&mapped, &self.probs)
    }
}

/// Convenience alias for [`DiscreteDistribution::new`].
pub fn build_distribution(values: &[f64], weights: &[f64]) -> Result<DiscreteDistribution> {
    DiscreteDistribution::new(values, weights)
}

/// `P(X > t)` for a canonical distribution.
pub fn survival(dist: &DiscreteDistribution, t: f64) -> f64 {
    dist.survival(t)
}

/// One weighted joint scenario of loss and environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub weight: f64,
    pub x: f64,
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

/// Weighted empirical sample of `(X, Z)` and optionally a background loss `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    rows: Vec<ScenarioRow>,
    has_y: bool,
}

impl ScenarioTable {
    pub fn new(rows: Vec<ScenarioRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let has_y = rows[0].y.is_some();
        let mut total = 0.0;
        for (index, row) in rows.iter().enumerate() {
            if row.y.is_some() != has_y {
                return Err(Error::InvalidModel(format!(
                    "row {index} disagrees with the others on the presence of y"
                )));
            }
            let finite = row.weight.is_finite()
                && row.x.is_finite()
                && row.z.is_finite()
                && row.y.map_or(true, f64::is_finite);
            if !finite {
                return Err(Error::NonFiniteValue { index });
            }
            if row.weight < 0.0 {
                return Err(Error::NegativeWeight {
                    index,
                    weight: row.weight,
                });
            }
            total += row.weight;
        }
        if total <= 0.0 {
            return Err(Error::ZeroTotalWeight);
        }
        Ok(Self { rows, has_y })
    }

    /// Reads the `weight,x,z[,y]` CSV format. Columns are matched by header
    /// name; errors cite the 1-based line number (the header is line 1).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(wi), Some(xi), Some(zi)) = (col("weight"), col("x"), col("z")) else {
            return Err(Error::Csv {
                line: 1,
                message: "header must contain the columns weight,x,z".into(),
            });
        };
        let yi = col("y");
        if let Some(extra) = headers
            .iter()
            .find(|h| !matches!(*h, "weight" | "x" | "z" | "y"))
        {
            return Err(Error::Csv {
                line: 1,
                message: format!("unknown column `{extra}`"),
            });
        }

        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<f64> {
                let raw = record.get(i).unwrap_or("");
                let v: f64 = raw.parse().map_err(|_| Error::Csv {
                    line,
                    message: format!("cannot parse {name} value `{raw}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        line,
                        message: format!("non-finite {name} value"),
                    });
                }
                Ok(v)
            };
            let weight = field(wi, "weight")?;
            if weight < 0.0 {
                return Err(Error::Csv {
                    line,
                    message: format!("negative weight {weight}"),
                });
            }
            rows.push(ScenarioRow {
                weight,
                x: field(xi, "x")?,
                z: field(zi, "z")?,
                y: yi.map(|i| field(i, "y")).transpose()?,
            });
        }
        if rows.is_empty() {
            return Err(Error::Csv {
                line: 1,
                message: "no scenario rows".into(),
            });
        }
        Self::new(rows).map_err(|e| Error::Csv {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::Csv {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::from_csv_reader(file)
    }

    pub fn rows(&self) -> &[ScenarioRow] {
        &self.rows
    }

    pub fn has_y(&self) -> bool {
        self.has_y
    }

    pub fn total_weight(&self) -> f64 {
        self.rows.iter().map(|r| r.weight).sum()
    }

    /// Empirical law of the loss column.
    pub fn x_marginal(&self) -> Result<DiscreteDistribution> {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.x).collect();
        let ws: Vec<f64> = self.rows.iter().map(|r| r.weight).collect();
        DiscreteDistribution::new(&xs, &ws)
    }

    /// Weighted mean of the loss column.
    pub fn mean_x(&self) -> f64 {
        let num: f64 = self.rows.iter().map(|r| r.weight * r.x).sum();
        num / self.total_weight()
    }
}

/// How environment values are grouped into states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Binning {
    /// One state per distinct environment value.
    DistinctValues,
    /// `k` contiguous bins of approximately equal weight.
    Equiprobable { k: usize },
}

/// Environment law over finitely many states together with the conditional
/// law of the loss in each state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalModel {
    states: Vec<f64>,
    state_probs: DiscreteDistribution,
    conditionals: Vec<DiscreteDistribution>,
}

impl ConditionalModel {
    /// Builds a model from `(state, weight, conditional law)` triples.
    /// States must be distinct; zero-weight states are dropped.
    pub fn new(entries: Vec<(f64, f64, DiscreteDistribution)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut entries: Vec<_> = entries.into_iter().filter(|e| e.1 != 0.0).collect();
        for (index, (z, w, _)) in entries.iter().enumerate() {
            if !z.is_finite() || !w.is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
            if *w < 0.0 {
                return Err(Error::NegativeWeight { index, weight: *w });
            }
        }
        if entries.is_empty() {
            return Err(Error::ZeroTotalWeight);
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(pair) = entries.windows(2).find(|p| same_point(p[0].0, p[1].0)) {
            return Err(Error::InvalidModel(format!(
                "duplicate environment state {}",
                pair[1].0
            )));
        }
        let states: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let weights: Vec<f64> = entries.iter().map(|e| e.1).collect();
        let state_probs = DiscreteDistribution::new(&states, &weights)?;
        debug_assert_eq!(state_probs.values(), &states[..]);
        let conditionals = entries.into_iter().map(|e| e.2).collect();
        Ok(Self {
            states,
            state_probs,
            conditionals,
        })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state_probs(&self) -> &DiscreteDistribution {
        &self.state_probs
    }

    pub fn conditionals(&self) -> &[DiscreteDistribution] {
        &self.conditionals
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Law of the loss obtained by mixing the conditionals with the state
    /// probabilities.
    pub fn mixture(&self) -> Result<DiscreteDistribution> {
        let mut values = Vec::new();
        let mut weights = Vec::new();
        for (pz, cond) in self.state_probs.probs().iter().zip(&self.conditionals) {
            for (v, p) in cond.values().iter().zip(cond.probs()) {
                values.push(*v);
                weights.push(pz * p);
            }
        }
        DiscreteDistribution::new(&values, &weights)
    }
}

/// Groups the table by environment state and forms one conditional loss law
/// per state.
pub fn build_conditional_model(table: &ScenarioTable, binning: Binning) -> Result<ConditionalModel> {
    let items: Vec<(f64, ScenarioRow)> = table.rows().iter().map(|r| (r.z, *r)).collect();
    let groups = group_by_key(items);
    let bins: Vec<Vec<ScenarioRow>> = match binning {
        Binning::DistinctValues => groups.into_iter().map(|(_, rows)| rows).collect(),
        Binning::Equiprobable { k } => equiprobable_bins(groups, k)?,
    };

    let mut entries = Vec::with_capacity(bins.len());
    for rows in bins {
        let weight: f64 = rows.iter().map(|r| r.weight).sum();
        if weight <= 0.0 {
            continue;
        }
        let z = if rows.len() == 1 || rows.iter().all(|r| r.z == rows[0].z) {
            rows[0].z
        } else {
            rows.iter().map(|r| r.weight * r.z).sum::<f64>() / weight
        };
        let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
        let ws: Vec<f64> = rows.iter().map(|r| r.weight).collect();
        entries.push((z, weight, DiscreteDistribution::new(&xs, &ws)?));
    }
    ConditionalModel::new(entries)
}

/// Splits sorted distinct-value groups into `k` contiguous, non-empty bins
/// whose cumulative weight tracks `i / k` of the total. The representative
/// state of a bin is its weighted mean environment value.
fn equiprobable_bins(groups: Vec<(f64, Vec<ScenarioRow>)>, k: usize) -> Result<Vec<Vec<ScenarioRow>>> {
    let n = groups.len();
    if k == 0 || k > n {
        return Err(Error::BinningInfeasible { k, distinct: n });
    }
    let weights: Vec<f64> = groups
        .iter()
        .map(|(_, rows)| rows.iter().map(|r| r.weight).sum())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cum.push(acc);
    }
    // ends[i] = exclusive end index of bin i
    let mut ends = Vec::with_capacity(k);
    let mut prev_end = 0usize;
    for i in 1..k {
        let target = total * i as f64 / k as f64;
        let natural = cum.partition_point(|&c| c < target) + 1;
        let end = natural.clamp(prev_end + 1, n - (k - i));
        ends.push(end);
        prev_end = end;
    }
    ends.push(n);

    let mut bins = Vec::with_capacity(k);
    let mut iter = groups.into_iter();
    let mut start = 0;
    for end in ends {
        let mut rows = Vec::new();
        for (_, g) in iter.by_ref().take(end - start) {
            rows.extend(g);
        }
        bins.push(rows);
        start = end;
    }
    Ok(bins)
}

/// True iff `(a_i - a_j)(b_i - b_j) >= 0` for all pairs.
pub fn check_comonotone(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    Ok(idx.windows(2).all(|w| b[w[0]] <= b[w[1]]))
}

/// A finite two-level sample space: environment states with probabilities,
/// and within each state a finite set of scenario points with conditional
/// probabilities. Several losses defined on the same space are coupled.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    states: Vec<f64>,
    state_probs: Vec<f64>,
    point_probs: Vec<Vec<f64>>,
}

/// A loss on a [`StateSpace`]: `loss[state][point]`.
pub type LossMatrix = Vec<Vec<f64>>;

impl StateSpace {
    pub fn new(states: Vec<f64>, state_probs: Vec<f64>, point_probs: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyInput);
        }
        if states.len() != state_probs.len() {
            return Err(Error::LengthMismatch {
                left: states.len(),
                right: state_probs.len(),
            });
        }
        if states.len() != point_probs.len() {
            return Err(Error::LengthMismatch {
                left: states.len(),
                right: point_probs.len(),
            });
        }
        if states.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidModel("states must be strictly increasing".into()));
        }
        check_probability_vector(&state_probs)?;
        for p in &point_probs {
            check_probability_vector(p)?;
        }
        Ok(Self {
            states,
            state_probs,
            point_probs,
        })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state_probs(&self) -> &[f64] {
        &self.state_probs
    }

    pub fn point_probs(&self) -> &[Vec<f64>] {
        &self.point_probs
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Shape check for a loss defined on this space.
    pub fn check_loss(&self, loss: &[Vec<f64>]) -> Result<()> {
        if loss.len() != self.n_states() {
            return Err(Error::LengthMismatch {
                left: loss.len(),
                right: self.n_states(),
            });
        }
        for (row, probs) in loss.iter().zip(&self.point_probs) {
            if row.len() != probs.len() {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: probs.len(),
                });
            }
        }
        Ok(())
    }

    /// Conditional model of one loss on this space.
    pub fn model_of(&self, loss: &[Vec<f64>]) -> Result<ConditionalModel> {
        self.check_loss(loss)?;
        let entries = self
            .states
            .iter()
            .zip(&self.state_probs)
            .zip(loss.iter().zip(&self.point_probs))
            .map(|((&z, &pz), (row, probs))| Ok((z, pz, DiscreteDistribution::new(row, probs)?)))
            .collect::<Result<Vec<_>>>()?;
        ConditionalModel::new(entries)
    }
}

pub(crate) fn check_probability_vector(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProbability("empty".into()));
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidProbability("entries must be finite and non-negative".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbability(format!("sums to {s}")));
    }
    Ok(())
}
