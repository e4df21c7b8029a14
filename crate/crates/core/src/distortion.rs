//! Distortion functions `g: [0,1] -> [0,1]` and rules assigning one to each
//! environment state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::same_point;

const DOMAIN_SLACK: f64 = 1e-12;
const CONCAVITY_TOL: f64 = 1e-10;

/// A non-decreasing `g` with `g(0) = 0` and `g(1) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", try_from = "DistortionRepr")]
pub enum DistortionFn {
    Identity,
    /// `min(u / (1 - level), 1)`: the expected-shortfall distortion.
    Avar { level: f64 },
    /// Left-continuous jump from 0 to 1 just after `1 - level`.
    #[serde(rename = "var")]
    VarIndicator { level: f64 },
    /// `u^p` with `0 < p <= 1`.
    Power { p: f64 },
    /// Linear interpolation through `(u, g(u))` knots.
    #[serde(rename = "pwl")]
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
enum DistortionRepr {
    Identity,
    Avar { level: f64 },
    #[serde(rename = "var")]
    VarIndicator { level: f64 },
    Power { p: f64 },
    #[serde(rename = "pwl")]
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

impl TryFrom<DistortionRepr> for DistortionFn {
    type Error = Error;

    fn try_from(r: DistortionRepr) -> Result<Self> {
        let d = match r {
            DistortionRepr::Identity => DistortionFn::Identity,
            DistortionRepr::Avar { level } => DistortionFn::Avar { level },
            DistortionRepr::VarIndicator { level } => DistortionFn::VarIndicator { level },
            DistortionRepr::Power { p } => DistortionFn::Power { p },
            DistortionRepr::PiecewiseLinear { knots } => DistortionFn::PiecewiseLinear { knots },
        };
        d.validate()?;
        Ok(d)
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistortion(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl DistortionFn {
    pub fn avar(level: f64) -> Result<Self> {
        let d = Self::Avar { level };
        d.validate()?;
        Ok(d)
    }

    pub fn var_indicator(level: f64) -> Result<Self> {
        let d = Self::VarIndicator { level };
        d.validate()?;
        Ok(d)
    }

    pub fn power(p: f64) -> Result<Self> {
        let d = Self::Power { p };
        d.validate()?;
        Ok(d)
    }

    pub fn piecewise_linear(knots: Vec<[f64; 2]>) -> Result<Self> {
        let d = Self::PiecewiseLinear { knots };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Identity => Ok(()),
            Self::Avar { level } => open_unit("avar level", *level),
            Self::VarIndicator { level } => open_unit("var level", *level),
            Self::Power { p } => {
                if *p > 0.0 && *p <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidDistortion(format!("power exponent must lie in (0, 1], got {p}")))
                }
            }
            Self::PiecewiseLinear { knots } => {
                if knots.len() < 2 || knots[0] != [0.0, 0.0] || knots[knots.len() - 1] != [1.0, 1.0] {
                    return Err(Error::InvalidDistortion(
                        "piecewise-linear knots must start at (0,0) and end at (1,1)".into(),
                    ));
                }
                for w in knots.windows(2) {
                    let ([u0, g0], [u1, g1]) = (w[0], w[1]);
                    if !(u0 < u1) {
                        return Err(Error::InvalidDistortion("knot abscissae must be strictly increasing".into()));
                    }
                    if !(g0 <= g1) {
                        return Err(Error::InvalidDistortion("knot ordinates must be non-decreasing".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// `g(u)`; inputs within `1e-12` outside `[0, 1]` are clamped.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&u) {
            return Err(Error::Domain(format!("distortion argument {u} outside [0, 1]")));
        }
        Ok(self.eval_clamped(u.clamp(0.0, 1.0)))
    }

    /// `g(u)` for `u` already known to lie in `[0, 1]`.
    pub(crate) fn eval_clamped(&self, u: f64) -> f64 {
        match self {
            Self::Identity => u,
            Self::Avar { level } => (u / (1.0 - level)).min(1.0),
            Self::VarIndicator { level } => {
                if u > 1.0 - level {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Power { p } => {
                if *p == 1.0 {
                    u
                } else {
                    u.powf(*p)
                }
            }
            Self::PiecewiseLinear { knots } => {
                if u >= 1.0 {
                    return 1.0;
                }
                let i = knots.partition_point(|k| k[0] <= u);
                let ([u0, g0], [u1, g1]) = (knots[i - 1], knots[i]);
                g0 + (g1 - g0) * (u - u0) / (u1 - u0)
            }
        }
    }

    /// Concavity on `[0, 1]`: exact for piecewise-linear knots (slopes must
    /// not increase), midpoint test on a uniform grid otherwise. A VaR jump
    /// sits strictly inside the interval and is never concave.
    pub fn is_concave(&self, grid_n: usize) -> bool {
        match self {
            Self::VarIndicator { .. } => false,
            Self::PiecewiseLinear { knots } => {
                let slopes: Vec<f64> = knots
                    .windows(2)
                    .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
                    .collect();
                slopes.windows(2).all(|s| s[1] <= s[0] + CONCAVITY_TOL)
            }
            _ => {
                let n = grid_n.max(3);
                let g: Vec<f64> = (0..n)
                    .map(|i| self.eval_clamped(i as f64 / (n - 1) as f64))
                    .collect();
                g.windows(3).all(|w| w[1] + CONCAVITY_TOL >= 0.5 * (w[0] + w[2]))
            }
        }
    }
}

/// Which distortion family a state-indexed level selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelFamily {
    Avar,
    Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub state: f64,
    pub distortion: DistortionFn,
}

/// Assigns a distortion `g_z` to every environment state `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", try_from = "RuleRepr")]
pub enum StateFamilyRule {
    Constant { distortion: DistortionFn },
    /// Explicit per-state distortions; states not listed use `default`.
    Table {
        entries: Vec<TableEntry>,
        default: DistortionFn,
    },
    /// The state itself, clamped into `clamp`, is the level of the family.
    LevelFromState { family: LevelFamily, clamp: [f64; 2] },
}

#[derive(Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
enum RuleRepr {
    Constant {
        distortion: DistortionFn,
    },
    Table {
        entries: Vec<TableEntry>,
        default: DistortionFn,
    },
    LevelFromState {
        family: LevelFamily,
        clamp: [f64; 2],
    },
}

impl TryFrom<RuleRepr> for StateFamilyRule {
    type Error = Error;

    fn try_from(r: RuleRepr) -> Result<Self> {
        let rule = match r {
            RuleRepr::Constant { distortion } => Self::Constant { distortion },
            RuleRepr::Table { entries, default } => Self::Table { entries, default },
            RuleRepr::LevelFromState { family, clamp } => Self::LevelFromState { family, clamp },
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl StateFamilyRule {
    pub fn constant(distortion: DistortionFn) -> Self {
        Self::Constant { distortion }
    }

    pub fn level_from_state(family: LevelFamily, lo: f64, hi: f64) -> Result<Self> {
        let rule = Self::LevelFromState { family, clamp: [lo, hi] };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { distortion } => distortion.validate(),
            Self::Table { entries, default } => {
                default.validate()?;
                for e in entries {
                    if !e.state.is_finite() {
                        return Err(Error::InvalidRule("table state must be finite".into()));
                    }
                    e.distortion.validate()?;
                }
                Ok(())
            }
            Self::LevelFromState { clamp: [lo, hi], .. } => {
                if lo > &0.0 && hi < &1.0 && lo <= hi {
                    Ok(())
                } else {
                    Err(Error::InvalidRule(format!(
                        "clamp interval [{lo}, {hi}] must be a non-empty subset of (0, 1)"
                    )))
                }
            }
        }
    }

    /// The distortion used in state `z`.
    pub fn resolve_state(&self, z: f64) -> DistortionFn {
        match self {
            Self::Constant { distortion } => distortion.clone(),
            Self::Table { entries, default } => entries
                .iter()
                .find(|e| same_point(e.state, z))
                .map_or_else(|| default.clone(), |e| e.distortion.clone()),
            Self::LevelFromState { family, clamp: [lo, hi] } => {
                let level = z.clamp(*lo, *hi);
                match family {
                    LevelFamily::Avar => DistortionFn::Avar { level },
                    LevelFamily::Var => DistortionFn::VarIndicator { level },
                }
            }
        }
    }

    /// Whether every distortion this rule can produce is concave.
    pub fn is_concave(&self, grid_n: usize) -> bool {
        match self {
            Self::Constant { distortion } => distortion.is_concave(grid_n),
            Self::Table { entries, default } => {
                default.is_concave(grid_n) && entries.iter().all(|e| e.distortion.is_concave(grid_n))
            }
            Self::LevelFromState { family, .. } => *family == LevelFamily::Avar,
        }
    }
}

/// Free-function form of [`StateFamilyRule::resolve_state`].
pub fn resolve_state(rule: &StateFamilyRule, z: f64) -> DistortionFn {
    rule.resolve_state(z)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(DistortionFn::avar(0.5).unwrap().eval(0.5).unwrap(), 1.0);
        assert_eq!(DistortionFn::Identity.eval(0.37).unwrap(), 0.37);
        assert_eq!(DistortionFn::var_indicator(0.95).unwrap().eval(0.05).unwrap(), 0.0);
        assert_eq!(DistortionFn::var_indicator(0.95).unwrap().eval(0.0500001).unwrap(), 1.0);
        assert_eq!(DistortionFn::power(0.5).unwrap().eval(0.25).unwrap(), 0.5);
        let pwl = DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 0.8], [1.0, 1.0]]).unwrap();
        assert!((pwl.eval(0.25).unwrap() - 0.4).abs() < 1e-15);
        assert!((pwl.eval(0.75).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn eval_domain() {
        let g = DistortionFn::Identity;
        assert_eq!(g.eval(-1e-13).unwrap(), 0.0);
        assert_eq!(g.eval(1.0 + 1e-13).unwrap(), 1.0);
        assert!(matches!(g.eval(1.1), Err(Error::Domain(_))));
        assert!(matches!(g.eval(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DistortionFn::avar(1.0).is_err());
        assert!(DistortionFn::avar(0.0).is_err());
        assert!(DistortionFn::var_indicator(1.5).is_err());
        assert!(DistortionFn::power(0.0).is_err());
        assert!(DistortionFn::power(1.5).is_err());
        assert!(DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 0.8]]).is_err());
        assert!(DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 0.8], [0.5, 0.9], [1.0, 1.0]]).is_err());
        assert!(DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 0.8], [0.7, 0.6], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn concavity_examples() {
        assert!(DistortionFn::avar(0.9).unwrap().is_concave(101));
        assert!(!DistortionFn::var_indicator(0.9).unwrap().is_concave(101));
        assert!(DistortionFn::power(0.5).unwrap().is_concave(101));
        assert!(DistortionFn::Identity.is_concave(3));
        let convex = DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 0.25], [1.0, 1.0]]).unwrap();
        assert!(!convex.is_concave(101));
        let concave = DistortionFn::piecewise_linear(vec![[0.0, 0.0], [0.5, 0.7071], [1.0, 1.0]]).unwrap();
        assert!(concave.is_concave(101));
    }

    #[test]
    fn resolve_examples() {
        let r = StateFamilyRule::constant(DistortionFn::Identity);
        assert_eq!(r.resolve_state(3.2), DistortionFn::Identity);

        let r = StateFamilyRule::level_from_state(LevelFamily::Avar, 0.01, 0.99).unwrap();
        assert_eq!(r.resolve_state(0.5), DistortionFn::Avar { level: 0.5 });
        assert_eq!(r.resolve_state(7.0), DistortionFn::Avar { level: 0.99 });

        let r = StateFamilyRule::Table {
            entries: vec![TableEntry { state: 1.0, distortion: DistortionFn::Power { p: 0.5 } }],
            default: DistortionFn::Identity,
        };
        assert_eq!(resolve_state(&r, 2.0), DistortionFn::Identity);
        assert_eq!(resolve_state(&r, 1.0), DistortionFn::Power { p: 0.5 });
    }

    #[test]
    fn json_encoding() {
        let cases = [
            (r#"{"family":"avar","level":0.95}"#, DistortionFn::Avar { level: 0.95 }),
            (r#"{"family":"identity"}"#, DistortionFn::Identity),
            (r#"{"family":"var","level":0.95}"#, DistortionFn::VarIndicator { level: 0.95 }),
            (r#"{"family":"power","p":0.5}"#, DistortionFn::Power { p: 0.5 }),
            (
                r#"{"family":"pwl","knots":[[0,0],[0.5,0.8],[1,1]]}"#,
                DistortionFn::PiecewiseLinear { knots: vec![[0.0, 0.0], [0.5, 0.8], [1.0, 1.0]] },
            ),
        ];
        for (json, expected) in cases {
            let d: DistortionFn = serde_json::from_str(json).unwrap();
            assert_eq!(d, expected);
            let back: DistortionFn = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
            assert_eq!(back, d);
        }
        assert!(serde_json::from_str::<DistortionFn>(r#"{"family":"avar","level":1.5}"#).is_err());

        let r: StateFamilyRule =
            serde_json::from_str(r#"{"rule":"level-from-state","family":"avar","clamp":[0.01,0.99]}"#).unwrap();
        assert_eq!(r, StateFamilyRule::LevelFromState { family: LevelFamily::Avar, clamp: [0.01, 0.99] });
        let r: StateFamilyRule = serde_json::from_str(
            r#"{"rule":"table","entries":[{"state":1,"distortion":{"family":"power","p":0.5}}],"default":{"family":"identity"}}"#,
        )
        .unwrap();
        assert!(matches!(r, StateFamilyRule::Table { .. }));
        let r: StateFamilyRule =
            serde_json::from_str(r#"{"rule":"constant","distortion":{"family":"identity"}}"#).unwrap();
        assert_eq!(r, StateFamilyRule::constant(DistortionFn::Identity));
        assert!(serde_json::from_str::<StateFamilyRule>(
            r#"{"rule":"level-from-state","family":"avar","clamp":[0.5,0.2]}"#
        )
        .is_err());
    }

    fn any_distortion() -> impl Strategy<Value = DistortionFn> {
        prop_oneof![
            Just(DistortionFn::Identity),
            (0.01f64..0.99).prop_map(|level| DistortionFn::Avar { level }),
            (0.01f64..0.99).prop_map(|level| DistortionFn::VarIndicator { level }),
            (0.05f64..=1.0).prop_map(|p| DistortionFn::Power { p }),
            prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..5).prop_map(|pts| {
                let mut us: Vec<f64> = pts.iter().map(|p| p.0).filter(|u| *u > 1e-6 && *u < 1.0 - 1e-6).collect();
                us.sort_by(f64::total_cmp);
                us.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
                let mut gs: Vec<f64> = pts.iter().map(|p| p.1).take(us.len()).collect();
                gs.sort_by(f64::total_cmp);
                let mut knots = vec![[0.0, 0.0]];
                knots.extend(us.into_iter().zip(gs).map(|(u, g)| [u, g]));
                knots.push([1.0, 1.0]);
                DistortionFn::PiecewiseLinear { knots }
            }),
        ]
    }

    proptest! {
        #[test]
        fn endpoints_and_monotone(d in any_distortion(), us in prop::collection::vec(0.0f64..=1.0, 2..20)) {
            prop_assert!(d.validate().is_ok());
            prop_assert_eq!(d.eval(0.0).unwrap(), 0.0);
            prop_assert_eq!(d.eval(1.0).unwrap(), 1.0);
            let mut us = us;
            us.sort_by(f64::total_cmp);
            let gs: Vec<f64> = us.iter().map(|&u| d.eval(u).unwrap()).collect();
            prop_assert!(gs.windows(2).all(|w| w[0] <= w[1] + 1e-15));
            prop_assert!(gs.iter().all(|g| (0.0..=1.0).contains(g)));
        }

        #[test]
        fn avar_dominates_identity(level in 0.01f64..0.99, u in 0.0f64..=1.0) {
            let g = DistortionFn::Avar { level };
            prop_assert!(g.eval(u).unwrap() >= u);
        }
    }
}
