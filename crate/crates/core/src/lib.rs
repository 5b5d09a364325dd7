//! Core models for QKD-secured reactor telemetry.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: closed-form decoy-state BB84 key-rate model and key-distillation traces.
//! - [`comm`]: communication-parameter algebra, key demand and the latency budget.
//! - [`pool`]: the dynamic key-pool ledger, lead-time search and post-failure uptime.
//! - [`crypto`]: OTP, AES-256-CBC and ASCON backends, IEEE-754 telemetry codec and
//!   the envelope wire format.
//! - [`exec`]: sequential / data-parallel batch execution.

pub mod algorithm;
pub mod comm;
pub mod crypto;
pub mod error;
pub mod exec;
pub mod model;
pub mod pool;
pub mod time;

pub use algorithm::Algorithm;
pub use comm::{LatencyRecord, UseCaseConfig};
pub use error::{CoreError, Result};
pub use exec::Execution;
pub use model::{ChannelModel, KeyGenEvent, KeyGenTrace, QberProfile, TraceSynth};
pub use pool::{ConsumptionSchedule, PoolTimeline, Uptime, Viability};
