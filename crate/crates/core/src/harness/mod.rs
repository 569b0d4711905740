//! Scenario files, workload and fault generation, the run loop, its trace
//! files and the summary recomputed from them.

pub mod config;
pub mod faults;
pub mod report;
pub mod run;
pub mod seeds;
pub mod trace;
pub mod workload;

pub use config::{load_scenario, ConfigError, FlowKind, Scenario, ScenarioConfig};
pub use report::{report, summarize, ReportError};
pub use run::{run_observed, run_scenario, Observer, RunError, RunOutput};
pub use trace::Summary;
