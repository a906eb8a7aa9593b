//! End-to-end experiment scenarios: TOML-configurable runs that wire the
//! energies, solvers, metrics, and rate fits together, check embedded
//! assertions, and emit CSV/JSON/SVG artifacts.

pub mod baseline;
pub mod carrier;
pub mod charts;
pub mod config;
pub mod metrics;
pub mod presets;
pub mod runner;

pub use baseline::{classifier_loss, mean_shift_baseline, MeanShiftConfig};
pub use carrier::Carrier;
pub use config::{
    AssertionConfig, DynamicsConfig, EnergyConfig, FitConfig, InitConfig, MeasureInit,
    ScenarioConfig, SolverConfig, SolverKind, TimeConfig,
};
pub use metrics::{classifier_metrics, predicts_label1, ClassifierMetrics};
pub use presets::{builtin, builtin_names};
pub use runner::{run_scenario, AssertionResult, ScenarioOutcome, Summary};
