//! Scenario files, Monte-Carlo sweeps and CSV output for the `cofmcw` simulator.
pub mod cli;
pub mod error;
pub mod rdm;
pub mod scenario;
pub mod sweep;
pub mod trial;

pub use error::{HarnessError, Result};
pub use scenario::{preset, IcMode, Mode, ScenarioSpec, TargetConfig};
pub use sweep::{run_sweep, CellSummary};
pub use trial::{run_trial, Cell, TrialResult};
