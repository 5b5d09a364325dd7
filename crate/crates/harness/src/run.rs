//! The two terminals and the loop driver.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::{Duration, Instant};

use qkdlink_core::crypto::{decode_signals, encode_signals, material_bytes, open, seal, CipherEnvelope};
use qkdlink_core::time::credit_step;
use qkdlink_core::comm::latency_ok;
use qkdlink_core::{Algorithm, ConsumptionSchedule, KeyGenTrace, LatencyRecord, UseCaseConfig};
use qkdlink_kms::{HttpKmsClient, HttpPairFeed, KeyRequester, KeyResolver, KmsError, KmsPair, PoolFeed};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::report::{CycleOutcome, CycleRecord, RunReport};
use crate::telemetry::TelemetrySource;
use crate::timing::{elapsed_ns, measure_stage, Stage};
use crate::transport::{loopback_pair, AuthKey, FramedStream};

const STOP: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExhaustPolicy {
    #[default]
    Halt,
    Skip,
}

/// Key generation replayed in simulated time, one schedule step per cycle.
///
/// Cycle `c` runs at step `lead + 1 + c`. Credits that complete by that step are fed
/// before the cycle's key request; once the step passes `fail_step` both servers are
/// marked failed and nothing more is credited.
#[derive(Debug, Clone)]
pub struct FeedPlan {
    pub trace: KeyGenTrace,
    pub schedule: ConsumptionSchedule,
}

impl FeedPlan {
    pub fn new(trace: KeyGenTrace, cfg: &UseCaseConfig, lead_s: f64) -> Self {
        Self {
            trace,
            schedule: ConsumptionSchedule::for_use_case(cfg, lead_s),
        }
    }

    /// Generation stops before cycle `cycle` (0-based) runs.
    pub fn fail_before_cycle(mut self, cycle: u64) -> Self {
        self.schedule = self.schedule.with_fail_step(self.schedule.lead_steps + cycle);
        self
    }

    pub fn step_of_cycle(&self, cycle: u64) -> u64 {
        self.schedule.lead_steps + 1 + cycle
    }
}

struct FeedCursor<'a> {
    plan: &'a FeedPlan,
    next: usize,
    failed: bool,
}

impl FeedCursor<'_> {
    fn credit_through(&mut self, feed: &dyn PoolFeed, step: u64) -> Result<()> {
        let step_ns = self.plan.schedule.step_ns;
        let events = self.plan.trace.events();
        while let Some(e) = events.get(self.next) {
            if credit_step(e.end_ns(), step_ns) > step {
                break;
            }
            feed.credit(e.end_ns(), e.key_bits())?;
            self.next += 1;
        }
        Ok(())
    }

    /// Returns whether generation has failed by this cycle.
    fn before_cycle(&mut self, feed: &dyn PoolFeed, cycle: u64) -> Result<bool> {
        let s = self.plan.step_of_cycle(cycle);
        let step_ns = self.plan.schedule.step_ns;
        if let Some(f) = self.plan.schedule.fail_step {
            if !self.failed && s > f {
                self.credit_through(feed, f)?;
                feed.inject_failure(f * step_ns)?;
                self.failed = true;
            }
        }
        if !self.failed {
            self.credit_through(feed, s)?;
        }
        feed.advance_to(s * step_ns)?;
        Ok(self.failed)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub use_case: UseCaseConfig,
    pub cycles: u64,
    pub seed: u64,
    pub policy: ExhaustPolicy,
    pub auth: AuthKey,
    pub feed: Option<FeedPlan>,
    /// Cipher used once generation has failed.
    pub switch_on_failure: Option<Algorithm>,
    /// Sleep to the start of each period instead of running back to back.
    pub realtime: bool,
}

impl RunConfig {
    pub fn new(use_case: UseCaseConfig, cycles: u64, seed: u64) -> Self {
        Self {
            use_case,
            cycles,
            seed,
            policy: ExhaustPolicy::Halt,
            auth: AuthKey::from_seed(seed),
            feed: None,
            switch_on_failure: None,
            realtime: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.use_case.validate()?;
        if let Some(plan) = &self.feed {
            plan.schedule.validate()?;
            if plan.schedule.step_ns != self.use_case.effective_period_ns() {
                return Err(HarnessError::Config("feed schedule step differs from the effective period".into()));
            }
        }
        Ok(())
    }
}

/// KMS access for both terminals plus the link-side feed.
#[derive(Clone)]
pub struct KmsEndpoints {
    pub requester: Arc<dyn KeyRequester>,
    pub resolver: Arc<dyn KeyResolver>,
    pub feed: Option<Arc<dyn PoolFeed>>,
}

impl KmsEndpoints {
    pub fn in_process(pair: Arc<KmsPair>) -> Self {
        Self {
            requester: pair.clone(),
            resolver: pair.clone(),
            feed: Some(pair),
        }
    }

    /// Servers reached over HTTP; SAE IDs are the server defaults.
    pub fn http(a_url: &str, b_url: &str) -> Result<Self> {
        Ok(Self {
            requester: Arc::new(HttpKmsClient::new(a_url, "sae-b")?),
            resolver: Arc::new(HttpKmsClient::new(b_url, "sae-a")?),
            feed: Some(Arc::new(HttpPairFeed::new(a_url, b_url)?)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum AckStatus {
    Ok = 0,
    KeyUnavailable = 1,
    DecryptFailed = 2,
    Malformed = 3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Ack {
    status: AckStatus,
    key_b_ns: u64,
    dec_b_ns: u64,
    action_b_ns: u64,
    /// Time B spent between receiving the envelope and sending this ack.
    proc_ns: u64,
    digest: [u8; 32],
    message: String,
}

impl Ack {
    fn failed(status: AckStatus, rec: &LatencyRecord, message: String) -> Self {
        Self {
            status,
            key_b_ns: rec.key_b_ns,
            dec_b_ns: rec.dec_b_ns,
            action_b_ns: rec.action_b_ns,
            proc_ns: 0,
            digest: [0; 32],
            message,
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(65 + self.message.len());
        b.push(self.status as u8);
        for v in [self.key_b_ns, self.dec_b_ns, self.action_b_ns, self.proc_ns] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(&self.digest);
        b.extend_from_slice(self.message.as_bytes());
        b
    }

    fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 65 {
            return Err(HarnessError::Protocol("short ack".into()));
        }
        let status = match b[0] {
            0 => AckStatus::Ok,
            1 => AckStatus::KeyUnavailable,
            2 => AckStatus::DecryptFailed,
            3 => AckStatus::Malformed,
            s => return Err(HarnessError::Protocol(format!("unknown ack status {s}"))),
        };
        let word = |i: usize| u64::from_be_bytes(b[1 + 8 * i..9 + 8 * i].try_into().expect("8 bytes"));
        Ok(Self {
            status,
            key_b_ns: word(0),
            dec_b_ns: word(1),
            action_b_ns: word(2),
            proc_ns: word(3),
            digest: b[33..65].try_into().expect("32 bytes"),
            message: String::from_utf8_lossy(&b[65..]).into_owned(),
        })
    }
}

fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

fn handle_envelope(bytes: &[u8], resolver: &dyn KeyResolver, precision_bits: u32) -> Ack {
    let start = Instant::now();
    let mut rec = LatencyRecord::default();
    let env = match CipherEnvelope::from_bytes(bytes) {
        Ok(e) => e,
        Err(e) => return Ack::failed(AckStatus::Malformed, &rec, e.to_string()),
    };
    let (key, _) = measure_stage(&mut rec, Stage::KeyB, || resolver.get_key_by_id(env.key_id));
    let key = match key {
        Ok(k) => k,
        Err(e) => return Ack::failed(AckStatus::KeyUnavailable, &rec, e.to_string()),
    };
    let (plain, _) = measure_stage(&mut rec, Stage::DecB, || open(&env, &key.key));
    let plain = match plain {
        Ok(p) => p,
        Err(e) => return Ack::failed(AckStatus::DecryptFailed, &rec, e.to_string()),
    };
    // Analysis stand-in: decode the values and fingerprint the plaintext for A to compare.
    let (decoded, _) = measure_stage(&mut rec, Stage::ActionB, || {
        decode_signals(&plain, precision_bits).map(|_| digest(&plain))
    });
    let mut ack = match decoded {
        Ok(d) => Ack {
            status: AckStatus::Ok,
            key_b_ns: rec.key_b_ns,
            dec_b_ns: rec.dec_b_ns,
            action_b_ns: rec.action_b_ns,
            proc_ns: 0,
            digest: d,
            message: String::new(),
        },
        Err(e) => Ack::failed(AckStatus::Malformed, &rec, e.to_string()),
    };
    ack.proc_ns = elapsed_ns(start);
    ack
}

/// Terminal B: serves envelopes until A sends the stop frame. Returns the cycles handled.
pub fn terminal_b<S: Read + Write>(
    mut link: FramedStream<S>,
    resolver: &dyn KeyResolver,
    precision_bits: u32,
) -> Result<u64> {
    let mut handled = 0;
    loop {
        let (cycle, payload) = link.recv()?;
        if cycle == STOP {
            return Ok(handled);
        }
        let ack = handle_envelope(&payload, resolver, precision_bits);
        link.send(cycle, &ack.to_bytes())?;
        handled += 1;
    }
}

/// Terminal A: runs the loop and collects the report. Leaves B running on error; dropping
/// the link stops it.
pub fn terminal_a<S: Read + Write>(link: &mut FramedStream<S>, kms: &KmsEndpoints, cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let uc = &cfg.use_case;
    let kappa = uc.kappa()? as usize;
    let period_ns = uc.effective_period_ns();
    let mut source = TelemetrySource::new(uc.n_signals as usize, uc.sampling_rate_hz, cfg.seed);
    let mut cursor = cfg.feed.as_ref().map(|plan| FeedCursor {
        plan,
        next: 0,
        failed: false,
    });
    if cursor.is_some() && kms.feed.is_none() {
        return Err(HarnessError::Config("a feed plan needs a pool feed".into()));
    }
    let mut report = RunReport {
        n_signals: uc.n_signals,
        algorithm: uc.algorithm,
        period_ns,
        cycles_requested: cfg.cycles,
        records: Vec::with_capacity(cfg.cycles as usize),
        halted_at: None,
    };
    let mut seen = HashSet::new();
    let t0 = Instant::now();

    for cycle in 0..cfg.cycles {
        let failed = match (&mut cursor, &kms.feed) {
            (Some(c), Some(feed)) => c.before_cycle(feed.as_ref(), cycle)?,
            _ => false,
        };
        let algorithm = match cfg.switch_on_failure {
            Some(alg) if failed => alg,
            _ => uc.algorithm,
        };
        if cfg.realtime {
            let due = Duration::from_nanos(cycle * period_ns);
            if let Some(wait) = due.checked_sub(t0.elapsed()) {
                std::thread::sleep(wait);
            }
        }

        let start = Instant::now();
        let mut rec = LatencyRecord::default();
        let (plain, _) = measure_stage(&mut rec, Stage::FetchA, || {
            let values: Vec<f64> = (0..kappa).flat_map(|_| source.next_frame().values).collect();
            encode_signals(&values, uc.precision_bits)
        });
        let plain = plain?;
        let bits = material_bytes(algorithm, plain.len()) as u64 * 8;
        let (key, _) = measure_stage(&mut rec, Stage::KeyA, || kms.requester.get_key(bits));
        let key = match key {
            Ok(k) => k,
            Err(KmsError::Exhausted { .. }) => {
                report.records.push(CycleRecord {
                    cycle,
                    algorithm,
                    key_id: None,
                    key_bits: 0,
                    latency: rec,
                    wall_ns: elapsed_ns(start),
                    outcome: CycleOutcome::Exhausted,
                    within_budget: false,
                });
                if cfg.policy == ExhaustPolicy::Halt {
                    report.halted_at = Some(cycle);
                    break;
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if !seen.insert(key.key_id) {
            return Err(HarnessError::Protocol(format!("key id {} delivered twice", key.key_id)));
        }
        let (env, _) = measure_stage(&mut rec, Stage::EncA, || {
            seal(algorithm, key.key_id, &key.key, &plain).map(|e| e.to_bytes())
        });
        let env = env?;
        let tx_start = Instant::now();
        link.send(cycle, &env)?;
        let (ack_cycle, ack) = link.recv()?;
        let round_trip = elapsed_ns(tx_start);
        if ack_cycle != cycle {
            return Err(HarnessError::Protocol(format!("ack for cycle {ack_cycle} while in cycle {cycle}")));
        }
        let ack = Ack::from_bytes(&ack)?;
        match ack.status {
            AckStatus::Ok => {}
            AckStatus::DecryptFailed => return Err(HarnessError::Integrity { cycle }),
            AckStatus::KeyUnavailable => return Err(HarnessError::Protocol(format!("cycle {cycle}: B could not fetch the key: {}", ack.message))),
            AckStatus::Malformed => return Err(HarnessError::Protocol(format!("cycle {cycle}: {}", ack.message))),
        }
        if ack.digest != digest(&plain) {
            return Err(HarnessError::Integrity { cycle });
        }
        rec.transmit_ns = round_trip.saturating_sub(ack.proc_ns);
        rec.key_b_ns = ack.key_b_ns;
        rec.dec_b_ns = ack.dec_b_ns;
        rec.action_b_ns = ack.action_b_ns;
        report.records.push(CycleRecord {
            cycle,
            algorithm,
            key_id: Some(key.key_id),
            key_bits: bits,
            latency: rec,
            wall_ns: elapsed_ns(start),
            outcome: CycleOutcome::Delivered,
            within_budget: latency_ok(&rec, uc),
        });
    }
    link.send(STOP, &[])?;
    Ok(report)
}

/// Runs both terminals over TCP loopback, B on its own thread.
pub fn run_loop(cfg: &RunConfig, kms: &KmsEndpoints) -> Result<RunReport> {
    let (a, b) = loopback_pair()?;
    let resolver = kms.resolver.clone();
    let auth = cfg.auth.clone();
    let precision = cfg.use_case.precision_bits;
    let b_thread = std::thread::Builder::new()
        .name("terminal-b".into())
        .spawn(move || terminal_b(FramedStream::new(b, auth), resolver.as_ref(), precision))?;
    let mut link = FramedStream::new(a, cfg.auth.clone());
    let result = terminal_a(&mut link, kms, cfg);
    drop(link);
    let b_result = b_thread
        .join()
        .map_err(|_| HarnessError::Protocol("terminal B panicked".into()))?;
    let report = result?;
    let handled = b_result?;
    if handled as usize != report.delivered_count() {
        return Err(HarnessError::Protocol(format!(
            "B handled {handled} envelopes, A delivered {}",
            report.delivered_count()
        )));
    }
    Ok(report)
}
