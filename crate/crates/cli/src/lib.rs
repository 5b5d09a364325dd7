//! Scenario configuration, grid sweeps, the live-loop runner and their CSV/SVG outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod sweep;

pub use config::{ScenarioConfig, OUT_ENV, STUDY_DISTANCES_KM};
pub use error::{CliError, Result};
pub use sweep::{run_fail_sweep, run_lead_sweep, Cell, CellValue, FailRow, LeadRow};
