//! Two-layer distortion risk measures for losses exposed to a random
//! environment, evaluated exactly on discrete scenario models.
//!
//! A loss `X` observed together with an environment `Z` taking finitely many
//! states is evaluated in two steps. Within each state `z` the conditional law
//! of `X` is distorted by `g_z` and integrated (the state-wise risk
//! `ρ_Z(X; z)`); the resulting risk profile is then integrated once more
//! against the environment law distorted by `h_Z`, giving `ρ(X; Z)`.
//!
//! Modules:
//! - [`model`]: distributions, scenario tables, conditional models
//! - [`distortion`]: distortion families and per-state rules
//! - [`choquet`]: Choquet integrals and capacities
//! - [`env_measure`]: the state-wise and environment-wise measures
//! - [`classical`]: VaR, AVaR, WVaR, RVaR
//! - [`background`]: measures in the presence of background risk
//! - [`gbm`]: closed form for a derivative on a GBM underlying
//! - [`dual`]: dual representation checks on small spaces
//! - [`verify`]: property suites shared by the CLI and tests
//! - [`report`]: compute configuration and JSON risk report
//! - [`normal`]: standard normal functions
//! - [`random`]: seeded generators for test models

// `!(a <= b)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod choquet;
pub mod classical;
pub mod distortion;
pub mod dual;
pub mod env_measure;
pub mod error;
pub mod gbm;
pub mod model;
pub mod normal;
pub mod random;
pub mod report;
pub mod verify;

pub use choquet::{choquet_capacity, choquet_distorted, distort_probability, is_submodular, Capacity};
pub use distortion::{DistortionFn, LevelFamily, StateFamilyRule};
pub use env_measure::{env_risk, inner_risk, risk_profile, EnvMeasureSpec, RiskProfile};
pub use error::{Error, Result};
pub use model::{
    build_conditional_model, build_distribution, check_comonotone, Binning, ConditionalModel, DiscreteDistribution,
    ScenarioRow, ScenarioTable, StateSpace,
};
