//! Compute configuration and the machine-readable risk report.

use serde::{Deserialize, Serialize};

use crate::background::{sandwich_check, JointLossModel, SandwichReport, SmoothConcaveG};
use crate::classical::{avar, rvar, var, wvar, LevelMeasure};
use crate::env_measure::{risk_profile, EnvMeasureSpec};
use crate::error::{Error, Result};
use crate::model::{build_conditional_model, Binning, ScenarioTable};

/// Tolerance of the report self-consistency check.
pub const SELF_CONSISTENCY_TOL: f64 = 1e-12;

/// Classical measures of the pooled loss to report alongside the two-layer value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparativeLevels {
    #[serde(default)]
    pub var: Vec<f64>,
    #[serde(default)]
    pub avar: Vec<f64>,
    #[serde(default)]
    pub wvar: Vec<LevelMeasure>,
    #[serde(default)]
    pub rvar: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeConfig {
    #[serde(default = "default_binning")]
    pub binning: Binning,
    pub spec: EnvMeasureSpec,
    #[serde(default)]
    pub comparatives: ComparativeLevels,
    /// Smooth distortion for the background-risk sandwich; needs a `y` column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<SmoothConcaveG>,
}

fn default_binning() -> Binning {
    Binning::DistinctValues
}

impl ComputeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Domain(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if let Binning::Equiprobable { k: 0 } = self.binning {
            return Err(Error::Domain("equiprobable binning needs k >= 1".into()));
        }
        let c = &self.comparatives;
        for &a in c.var.iter().chain(&c.avar) {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Domain(format!("level {a} outside (0, 1)")));
            }
        }
        for &[a1, a2] in &c.rvar {
            if !(0.0 < a1 && a1 < a2 && a2 < 1.0) {
                return Err(Error::Domain(format!("rvar levels [{a1}, {a2}] need 0 < a1 < a2 < 1")));
            }
        }
        Ok(())
    }
}

/// Digests of the files a report was computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub scenarios_sha256: String,
    pub config_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub z: f64,
    pub p: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelValue {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WvarValue {
    pub measure: LevelMeasure,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvarValue {
    pub levels: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparatives {
    pub var: Vec<LevelValue>,
    pub avar: Vec<LevelValue>,
    pub wvar: Vec<WvarValue>,
    pub rvar: Vec<RvarValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSection {
    pub g: SmoothConcaveG,
    pub rho_r: f64,
    pub gamma: f64,
    pub rho_l: f64,
    pub ok: bool,
}

impl BackgroundSection {
    fn new(g: SmoothConcaveG, r: SandwichReport) -> Self {
        Self {
            g,
            rho_r: r.rho_r,
            gamma: r.gamma,
            rho_l: r.rho_l,
            ok: r.ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub inputs: ReportInputs,
    pub binning: Binning,
    pub spec: EnvMeasureSpec,
    pub profile: Vec<ProfileRow>,
    pub outer_value: f64,
    pub comparatives: Comparatives,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundSection>,
    /// Wall-clock milliseconds; left out for byte-reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl RiskReport {
    /// Outer value recomputed from the stored profile.
    pub fn recomputed_outer(&self) -> Result<f64> {
        let profile = crate::env_measure::RiskProfile {
            states: self.profile.iter().map(|r| r.z).collect(),
            state_probs: self.profile.iter().map(|r| r.p).collect(),
            values: self.profile.iter().map(|r| r.rho).collect(),
        };
        profile.aggregate(&self.spec.outer)
    }

    pub fn self_consistent(&self) -> Result<bool> {
        Ok((self.recomputed_outer()? - self.outer_value).abs() <= SELF_CONSISTENCY_TOL)
    }
}

fn finite(label: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{label} is not finite")))
    }
}

pub fn build_report(table: &ScenarioTable, config: &ComputeConfig, inputs: ReportInputs) -> Result<RiskReport> {
    config.validate()?;
    let model = build_conditional_model(table, config.binning)?;
    let profile = risk_profile(&model, &config.spec);
    let outer_value = finite("outer value", profile.aggregate(&config.spec.outer)?)?;
    let rows = profile
        .states
        .iter()
        .zip(&profile.state_probs)
        .zip(&profile.values)
        .map(|((&z, &p), &rho)| Ok(ProfileRow { z, p, rho: finite("state risk", rho)? }))
        .collect::<Result<Vec<_>>>()?;

    let pooled = table.x_marginal()?;
    let c = &config.comparatives;
    let comparatives = Comparatives {
        var: c
            .var
            .iter()
            .map(|&level| Ok(LevelValue { level, value: var(&pooled, level)? }))
            .collect::<Result<_>>()?,
        avar: c
            .avar
            .iter()
            .map(|&level| Ok(LevelValue { level, value: avar(&pooled, level)? }))
            .collect::<Result<_>>()?,
        wvar: c
            .wvar
            .iter()
            .map(|m| WvarValue {
                measure: m.clone(),
                value: wvar(&pooled, m),
            })
            .collect(),
        rvar: c
            .rvar
            .iter()
            .map(|&[a1, a2]| Ok(RvarValue { levels: [a1, a2], value: rvar(&pooled, a1, a2)? }))
            .collect::<Result<_>>()?,
    };

    let background = match config.background {
        Some(g) => {
            let joint = JointLossModel::from_table(table)?;
            Some(BackgroundSection::new(g, sandwich_check(&joint, &g)?))
        }
        None => None,
    };

    Ok(RiskReport {
        inputs,
        binning: config.binning,
        spec: config.spec.clone(),
        profile: rows,
        outer_value,
        comparatives,
        background,
        elapsed_ms: None,
    })
}
