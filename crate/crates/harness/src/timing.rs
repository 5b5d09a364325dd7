//! Stage timing on the monotonic clock.

use std::time::Instant;

use qkdlink_core::LatencyRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    FetchA,
    KeyA,
    EncA,
    Transmit,
    KeyB,
    DecB,
    ActionB,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::FetchA,
        Stage::KeyA,
        Stage::EncA,
        Stage::Transmit,
        Stage::KeyB,
        Stage::DecB,
        Stage::ActionB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::FetchA => "fetch",
            Stage::KeyA => "key_a",
            Stage::EncA => "enc",
            Stage::Transmit => "tx",
            Stage::KeyB => "key_b",
            Stage::DecB => "dec",
            Stage::ActionB => "action",
        }
    }

    pub fn slot(self, rec: &mut LatencyRecord) -> &mut u64 {
        match self {
            Stage::FetchA => &mut rec.fetch_a_ns,
            Stage::KeyA => &mut rec.key_a_ns,
            Stage::EncA => &mut rec.enc_a_ns,
            Stage::Transmit => &mut rec.transmit_ns,
            Stage::KeyB => &mut rec.key_b_ns,
            Stage::DecB => &mut rec.dec_b_ns,
            Stage::ActionB => &mut rec.action_b_ns,
        }
    }
}

pub fn elapsed_ns(since: Instant) -> u64 {
    u64::try_from(since.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

/// Runs `f`, stores its duration in the stage's field and returns the result with the
/// duration in seconds.
pub fn measure_stage<R>(rec: &mut LatencyRecord, stage: Stage, f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let out = f();
    let ns = elapsed_ns(start);
    *stage.slot(rec) = ns;
    (out, ns as f64 * 1e-9)
}
