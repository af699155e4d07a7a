//! Scenario configuration, studies and the command-line driver.

pub mod compare;
pub mod config;
pub mod mms;
pub mod run;
pub mod transfer;

pub use config::{ConfigError, LoadedScenario, Mode, Scenario};
pub use run::{run_scenario, HarnessError, RunRecord};
