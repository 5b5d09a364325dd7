//! Terminal A samples telemetry, encrypts it with a key from its KMS and sends the
//! envelope; terminal B fetches the same key by ID, decrypts and acknowledges. Every
//! stage of every cycle is timed.

pub mod error;
pub mod report;
pub mod run;
pub mod telemetry;
pub mod timing;
pub mod transport;

pub use error::HarnessError;
pub use report::{CycleOutcome, CycleRecord, RunReport, StageStats};
pub use run::{run_loop, terminal_a, terminal_b, ExhaustPolicy, FeedPlan, KmsEndpoints, RunConfig};
pub use telemetry::{generate_telemetry, TelemetryFrame, TelemetrySource};
pub use timing::{measure_stage, Stage};
pub use transport::{loopback_pair, AuthKey, FramedStream};
