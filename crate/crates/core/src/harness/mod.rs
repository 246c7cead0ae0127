//! Experiment harness: scenarios, Monte Carlo driver, configuration and
//! result serialization.

pub mod asvdcheck;
pub mod baseline;
pub mod config;
pub mod montecarlo;
pub mod report;
pub mod scenarios;
pub mod signals;

pub use asvdcheck::{asvd_check, AsvdCheckReport};
pub use config::{AliseForm, FilterKind, NoiseOverrides, ScenarioConfig};
pub use montecarlo::{
    run_monte_carlo, run_scenario, run_trial, write_artifacts, Aggregate, MonteCarloRun,
    RmseReport, TrialResult,
};
pub use report::{analyze as analysis_report, AnalysisReport};
pub use scenarios::{build_named, build_scenario, ControlLaw, Reference, Scenario};
