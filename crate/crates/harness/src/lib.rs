//! Scenario runner, summaries and verification suites for `podds-core`.

pub mod dataset;
pub mod error;
pub mod runner;
pub mod scenario;
pub mod summary;
pub mod verify;

pub use error::{HarnessError, Result};
pub use runner::{run_scenario, write_outputs, ReplicateRow, ScenarioRun};
pub use scenario::Scenario;
pub use summary::{KindSummary, SummaryTable};
pub use verify::{run_suite, Suite, SuiteReport, VerifyConfig};
