//! Decoy-state BB84 key-rate model and key-distillation traces.
//!
//! The rate model is the textbook qubit-based form: raw detections scale with source
//! rate, detector efficiency and channel transmissivity; the secret fraction subtracts
//! error-correction leakage from the single-photon contribution. A trace is the
//! sequence of distillation cycles a running link reports; each cycle contributes
//! `floor(skr_g * dt_g)` bits to the key pool when it completes.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::time::{nanos_to_secs, secs_to_nanos, NANOS_PER_SEC};

/// Calibrated SKR fluctuation (one sigma) at the reference length.
pub const SKR_SIGMA_REF_BPS: f64 = 10_300.0;
/// Calibrated QBER fluctuation (one sigma, fraction).
pub const QBER_SIGMA: f64 = 0.0007;
/// Length at which the fluctuation figures were measured.
pub const SIGMA_REF_LENGTH_KM: f64 = 54.0;
/// Default duration of a regular distillation cycle.
pub const DEFAULT_CYCLE_PERIOD_S: f64 = 120.0;
/// Default half-width of the uniform cycle-duration jitter.
pub const DEFAULT_JITTER: f64 = 0.2;

/// Binary Shannon entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(CoreError::Domain(format!("binary entropy argument {e} outside [0, 1]")));
    }
    if e == 0.0 || e == 1.0 {
        return Ok(0.0);
    }
    Ok(-e * e.log2() - (1.0 - e) * (1.0 - e).log2())
}

fn is_fraction(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Piecewise-linear QBER as a function of channel length, flat beyond the end anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberProfile {
    anchors: Vec<(f64, f64)>,
}

impl QberProfile {
    /// Anchors are `(length_km, qber)` pairs; lengths strictly increasing, QBER non-decreasing.
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(CoreError::Config("QBER profile needs at least one anchor".into()));
        }
        for w in anchors.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(CoreError::Config("QBER anchor lengths must be strictly increasing".into()));
            }
            if w[1].1 < w[0].1 {
                return Err(CoreError::Config(format!(
                    "QBER profile decreases between {} km and {} km",
                    w[0].0, w[1].0
                )));
            }
        }
        if anchors.iter().any(|&(l, e)| !(l >= 0.0 && l.is_finite()) || !is_fraction(e)) {
            return Err(CoreError::Config("QBER anchors need length >= 0 and QBER in [0, 1]".into()));
        }
        Ok(Self { anchors })
    }

    pub fn constant(qber: f64) -> Result<Self> {
        Self::new(vec![(0.0, qber)])
    }

    /// Calibrated profile (3.8% at 54 km rising to 7.5% at 145 km).
    pub fn calibrated() -> Self {
        Self {
            anchors: vec![
                (0.0, 0.038),
                (54.0, 0.038),
                (82.0, 0.0437),
                (90.0, 0.0470),
                (105.0, 0.0472),
                (120.0, 0.0532),
                (135.0, 0.0605),
                (140.0, 0.0716),
                (145.0, 0.0750),
            ],
        }
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn at(&self, length_km: f64) -> f64 {
        let first = self.anchors[0];
        let last = self.anchors[self.anchors.len() - 1];
        if length_km <= first.0 {
            return first.1;
        }
        if length_km >= last.0 {
            return last.1;
        }
        let i = self.anchors.partition_point(|&(l, _)| l <= length_km);
        let (l0, e0) = self.anchors[i - 1];
        let (l1, e1) = self.anchors[i];
        e0 + (e1 - e0) * (length_km - l0) / (l1 - l0)
    }
}

/// Delay until the first distillation completes after the link starts, growing with loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartupModel {
    pub ref_length_km: f64,
    pub ref_delay_s: f64,
    /// Delay scales as `transmissivity^-exponent` relative to the reference length.
    pub exponent: f64,
}

impl StartupModel {
    pub fn calibrated() -> Self {
        Self {
            ref_length_km: 50.0,
            ref_delay_s: 110.0,
            exponent: 0.77,
        }
    }
}

/// Fiber channel plus the detection and post-processing coefficients of the rate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub length_km: f64,
    pub atten_coeff_db_per_km: f64,
    pub qber_profile: QberProfile,
    pub source_rate_hz: f64,
    pub detector_efficiency: f64,
    pub sift_ratio: f64,
    pub ec_efficiency: f64,
    pub p1_lower: f64,
    pub e1_upper: f64,
    /// Long first cycle after start-up; `None` makes every cycle follow the regular cadence.
    pub startup: Option<StartupModel>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl ChannelModel {
    /// Default model, calibrated to 320 kbps / 3.8% near 54 km, zero rate at 145 km and
    /// the OTP/AES feasibility brackets at 82/90, 135/140 and 140/145 km.
    pub fn calibrated() -> Self {
        Self {
            length_km: 54.0,
            atten_coeff_db_per_km: 0.2,
            qber_profile: QberProfile::calibrated(),
            source_rate_hz: 1.0e9,
            detector_efficiency: 0.0235,
            sift_ratio: 0.9,
            ec_efficiency: 1.16,
            p1_lower: 0.622,
            e1_upper: 0.05,
            startup: Some(StartupModel::calibrated()),
        }
    }

    pub fn with_length(&self, length_km: f64) -> Self {
        Self {
            length_km,
            ..self.clone()
        }
    }

    pub fn without_startup(&self) -> Self {
        Self {
            startup: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(CoreError::Config(format!("channel model: {what}")));
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return bad("length_km must be finite and >= 0");
        }
        if !(self.atten_coeff_db_per_km > 0.0 && self.atten_coeff_db_per_km.is_finite()) {
            return bad("attenuation coefficient must be > 0");
        }
        if !(self.source_rate_hz > 0.0 && self.source_rate_hz.is_finite()) {
            return bad("source rate must be > 0");
        }
        for (name, v) in [
            ("detector_efficiency", self.detector_efficiency),
            ("sift_ratio", self.sift_ratio),
            ("p1_lower", self.p1_lower),
            ("e1_upper", self.e1_upper),
        ] {
            if !is_fraction(v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.ec_efficiency >= 1.0 && self.ec_efficiency.is_finite()) {
            return bad("ec_efficiency must be >= 1");
        }
        if let Some(s) = self.startup {
            if !(s.ref_delay_s > 0.0 && s.exponent >= 0.0 && s.ref_length_km >= 0.0) {
                return bad("startup model needs a positive delay and non-negative exponent");
            }
        }
        Ok(())
    }

    pub fn transmissivity(&self) -> f64 {
        transmissivity_at(self.atten_coeff_db_per_km, self.length_km)
    }

    pub fn qber(&self) -> f64 {
        self.qber_profile.at(self.length_km)
    }

    /// Secret fraction `p1 [1 - h(e1)] - f_ec h(E)` before clamping.
    pub fn secret_fraction(&self) -> f64 {
        let h1 = binary_entropy(self.e1_upper).expect("validated fraction");
        let he = binary_entropy(self.qber()).expect("validated fraction");
        self.p1_lower * (1.0 - h1) - self.ec_efficiency * he
    }

    pub fn raw_rate(&self) -> f64 {
        self.source_rate_hz * self.detector_efficiency * self.transmissivity()
    }

    /// Secret key rate in bits/s; zero when the secret fraction is non-positive.
    pub fn secret_key_rate(&self) -> f64 {
        self.raw_rate() * self.sift_ratio * self.secret_fraction().max(0.0)
    }

    /// Upper bound `f_source * eta_d * eta_sift` on the secret key rate.
    pub fn rate_bound(&self) -> f64 {
        self.source_rate_hz * self.detector_efficiency * self.sift_ratio
    }

    pub fn startup_delay_s(&self) -> Option<f64> {
        self.startup.map(|s| {
            let rel = transmissivity_at(self.atten_coeff_db_per_km, self.length_km)
                / transmissivity_at(self.atten_coeff_db_per_km, s.ref_length_km);
            s.ref_delay_s * rel.powf(-s.exponent)
        })
    }
}

/// `10^(-a l / 10)`.
pub fn transmissivity_at(atten_db_per_km: f64, length_km: f64) -> f64 {
    10f64.powf(-atten_db_per_km * length_km / 10.0)
}

pub fn transmissivity(model: &ChannelModel) -> f64 {
    model.transmissivity()
}

pub fn secret_key_rate(model: &ChannelModel) -> f64 {
    model.secret_key_rate()
}

/// One completed key-distillation cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyGenEvent {
    pub start_ns: u64,
    pub dt_ns: u64,
    pub skr_bps: f64,
    pub qber: f64,
}

impl KeyGenEvent {
    pub fn end_ns(&self) -> u64 {
        self.start_ns + self.dt_ns
    }

    pub fn start_s(&self) -> f64 {
        nanos_to_secs(self.start_ns)
    }

    pub fn dt_s(&self) -> f64 {
        nanos_to_secs(self.dt_ns)
    }

    /// Whole key bits the cycle adds to the pool.
    pub fn key_bits(&self) -> u64 {
        (self.skr_bps * self.dt_ns as f64 / NANOS_PER_SEC as f64).floor() as u64
    }
}

/// Contiguous sequence of distillation cycles starting at `t = 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyGenTrace {
    events: Vec<KeyGenEvent>,
}

impl KeyGenTrace {
    pub fn new(events: Vec<KeyGenEvent>) -> Result<Self> {
        let mut expected_start = events.first().map_or(0, |e| e.start_ns);
        for (g, e) in events.iter().enumerate() {
            if e.start_ns != expected_start {
                return Err(CoreError::Domain(format!("event {g} does not start where event {} ended", g.saturating_sub(1))));
            }
            if e.dt_ns == 0 {
                return Err(CoreError::Domain(format!("event {g} has zero duration")));
            }
            if !(e.skr_bps >= 0.0 && e.skr_bps.is_finite()) {
                return Err(CoreError::Domain(format!("event {g} has negative or non-finite SKR")));
            }
            if !is_fraction(e.qber) {
                return Err(CoreError::Domain(format!("event {g} has QBER outside [0, 1]")));
            }
            expected_start = e.end_ns();
        }
        Ok(Self { events })
    }

    /// Trace with fixed cadence and rate, starting at zero.
    pub fn constant(cycle_s: f64, bits_per_cycle: u64, cycles: usize) -> Self {
        let dt_ns = secs_to_nanos(cycle_s);
        let skr = bits_per_cycle as f64 / cycle_s;
        let events = (0..cycles as u64)
            .map(|g| KeyGenEvent {
                start_ns: g * dt_ns,
                dt_ns,
                skr_bps: skr,
                qber: 0.0,
            })
            .collect();
        let trace = Self { events };
        debug_assert!(trace.events.iter().all(|e| e.key_bits() == bits_per_cycle));
        trace
    }

    pub fn events(&self) -> &[KeyGenEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Completion time of the last cycle.
    pub fn end_ns(&self) -> u64 {
        self.events.last().map_or(0, |e| e.end_ns())
    }

    pub fn end_s(&self) -> f64 {
        nanos_to_secs(self.end_ns())
    }

    pub fn total_key_bits(&self) -> u64 {
        self.events.iter().map(KeyGenEvent::key_bits).sum()
    }

    /// Key bits of all cycles completed by `t_ns` (inclusive).
    pub fn key_bits_until(&self, t_ns: u64) -> u64 {
        self.events
            .iter()
            .take_while(|e| e.end_ns() <= t_ns)
            .map(KeyGenEvent::key_bits)
            .sum()
    }

    pub fn mean_skr(&self) -> f64 {
        let end = self.end_ns();
        if end == 0 {
            return 0.0;
        }
        self.total_key_bits() as f64 / nanos_to_secs(end)
    }

    /// Cuts the trace at the last cycle completing no later than `t_ns`.
    pub fn truncated(&self, t_ns: u64) -> Self {
        Self {
            events: self.events.iter().copied().take_while(|e| e.end_ns() <= t_ns).collect(),
        }
    }
}

/// Parameters of the synthetic trace generator.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSynth {
    pub duration_s: f64,
    pub cycle_period_s: f64,
    pub jitter: f64,
    pub seed: u64,
    /// Adds zero-mean Gaussian fluctuation to SKR and QBER per cycle.
    pub noise: bool,
    pub skr_sigma_ref_bps: f64,
    pub qber_sigma: f64,
}

impl TraceSynth {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        Self {
            duration_s,
            cycle_period_s: DEFAULT_CYCLE_PERIOD_S,
            jitter: DEFAULT_JITTER,
            seed,
            noise: true,
            skr_sigma_ref_bps: SKR_SIGMA_REF_BPS,
            qber_sigma: QBER_SIGMA,
        }
    }

    pub fn cycle_period(mut self, secs: f64) -> Self {
        self.cycle_period_s = secs;
        self
    }

    pub fn jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn noise(mut self, on: bool) -> Self {
        self.noise = on;
        self
    }

    /// Generates cycles until the trace covers `duration_s`.
    pub fn generate(&self, model: &ChannelModel) -> Result<KeyGenTrace> {
        model.validate()?;
        if !(self.duration_s > 0.0 && self.cycle_period_s > 0.0) {
            return Err(CoreError::Domain("duration and cycle period must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(CoreError::Domain("jitter must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mean_skr = model.secret_key_rate();
        let mean_qber = model.qber();
        let ref_skr = model.with_length(SIGMA_REF_LENGTH_KM).secret_key_rate();
        let skr_sigma = if ref_skr > 0.0 {
            self.skr_sigma_ref_bps * mean_skr / ref_skr
        } else {
            0.0
        };
        let duration_ns = secs_to_nanos(self.duration_s);
        let mut first_period = model.startup_delay_s();
        let mut events = Vec::new();
        let mut t = 0u64;
        while t < duration_ns {
            let base = first_period.take().unwrap_or(self.cycle_period_s);
            let u: f64 = if self.jitter > 0.0 {
                rng.gen_range(-self.jitter..=self.jitter)
            } else {
                0.0
            };
            let dt_ns = secs_to_nanos(base * (1.0 + u)).max(1);
            let (skr_bps, qber) = if self.noise {
                let zs: f64 = StandardNormal.sample(&mut rng);
                let zq: f64 = StandardNormal.sample(&mut rng);
                (
                    (mean_skr + skr_sigma * zs).max(0.0),
                    (mean_qber + self.qber_sigma * zq).clamp(0.0, 1.0),
                )
            } else {
                (mean_skr, mean_qber)
            };
            events.push(KeyGenEvent {
                start_ns: t,
                dt_ns,
                skr_bps,
                qber,
            });
            t += dt_ns;
        }
        Ok(KeyGenTrace { events })
    }
}

/// Synthesizes a trace with calibrated noise; the first cycle follows the model's start-up delay.
pub fn synthesize_trace(
    model: &ChannelModel,
    duration_s: f64,
    cycle_period_s: f64,
    jitter: f64,
    seed: u64,
) -> Result<KeyGenTrace> {
    TraceSynth::new(duration_s, seed)
        .cycle_period(cycle_period_s)
        .jitter(jitter)
        .generate(model)
}

const TRACE_HEADER: [&str; 3] = ["t_s", "skr_bps", "qber"];

/// Reads a `t_s,skr_bps,qber` CSV log; each row marks the completion of one cycle,
/// with `t_s` in seconds since the link started.
pub fn load_trace<R: Read>(reader: R) -> Result<KeyGenTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut events = Vec::new();
    let mut prev_end = 0u64;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CoreError::TraceParse {
            row,
            reason: e.to_string(),
        })?;
        if i == 0 {
            if rec.iter().eq(TRACE_HEADER) {
                continue;
            }
            return Err(CoreError::TraceParse {
                row,
                reason: format!("expected header `{}`", TRACE_HEADER.join(",")),
            });
        }
        if rec.len() != 3 {
            return Err(CoreError::TraceParse {
                row,
                reason: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let field = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|e| CoreError::TraceParse {
                row,
                reason: format!("{}: {e}", TRACE_HEADER[j]),
            })
        };
        let (t, skr, qber) = (field(0)?, field(1)?, field(2)?);
        if !(t.is_finite() && t > 0.0) {
            return Err(CoreError::TraceParse {
                row,
                reason: "timestamp must be finite and positive".into(),
            });
        }
        let end = secs_to_nanos(t);
        if end <= prev_end {
            return Err(CoreError::TraceParse {
                row,
                reason: "timestamps must be strictly increasing".into(),
            });
        }
        if !(skr.is_finite() && skr >= 0.0) {
            return Err(CoreError::TraceParse {
                row,
                reason: "negative or non-finite SKR".into(),
            });
        }
        if !is_fraction(qber) {
            return Err(CoreError::TraceParse {
                row,
                reason: "QBER outside [0, 1]".into(),
            });
        }
        events.push(KeyGenEvent {
            start_ns: prev_end,
            dt_ns: end - prev_end,
            skr_bps: skr,
            qber,
        });
        prev_end = end;
    }
    Ok(KeyGenTrace { events })
}

pub fn write_trace<W: Write>(trace: &KeyGenTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CoreError::Io(e.to_string());
    w.write_record(TRACE_HEADER).map_err(io)?;
    for e in trace.events() {
        w.write_record([
            nanos_to_secs(e.end_ns()).to_string(),
            e.skr_bps.to_string(),
            e.qber.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit evaluation of the entropy formula at e = 0.038.
    const H_0_038: f64 = 0.233_045_892_564_450_446_397_863_158_138_895_655;
    const H_0_075: f64 = 0.384_311_544_126_497_086_042_820_144_401_116_600;

    #[test]
    fn entropy_boundaries_and_peak() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
    }

    #[test]
    fn entropy_matches_high_precision_values() {
        assert!((binary_entropy(0.038).unwrap() - H_0_038).abs() < 1e-12);
        assert!((binary_entropy(0.075).unwrap() - H_0_075).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_out_of_range() {
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.0001).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn transmissivity_examples() {
        let m = ChannelModel::calibrated();
        assert_eq!(m.with_length(0.0).transmissivity(), 1.0);
        assert!((m.with_length(50.0).transmissivity() - 0.1).abs() < 1e-15);
        assert!((m.with_length(150.0).transmissivity() - 0.001).abs() < 1e-17);
    }

    #[test]
    fn calibrated_rate_at_54_km() {
        let skr = ChannelModel::calibrated().with_length(54.0).secret_key_rate();
        assert!((skr - 320_000.0).abs() <= 0.05 * 320_000.0, "{skr}");
        assert!((ChannelModel::calibrated().qber() - 0.038).abs() < 1e-12);
    }

    #[test]
    fn calibrated_rate_vanishes_at_145_km() {
        assert_eq!(ChannelModel::calibrated().with_length(145.0).secret_key_rate(), 0.0);
    }

    #[test]
    fn high_qber_clamps_to_zero() {
        let mut m = ChannelModel::calibrated();
        m.qber_profile = QberProfile::constant(0.2).unwrap();
        assert!(m.secret_fraction() < 0.0);
        assert_eq!(m.secret_key_rate(), 0.0);
    }

    #[test]
    fn profile_interpolates_and_clamps() {
        let p = QberProfile::new(vec![(10.0, 0.02), (20.0, 0.04)]).unwrap();
        assert_eq!(p.at(0.0), 0.02);
        assert!((p.at(15.0) - 0.03).abs() < 1e-15);
        assert_eq!(p.at(30.0), 0.04);
        assert!(QberProfile::new(vec![(10.0, 0.04), (20.0, 0.02)]).is_err());
        assert!(QberProfile::new(vec![(10.0, 0.02), (10.0, 0.03)]).is_err());
    }

    #[test]
    fn validate_rejects_bad_coefficients() {
        let mut m = ChannelModel::calibrated();
        m.ec_efficiency = 0.9;
        assert!(m.validate().is_err());
        let mut m = ChannelModel::calibrated();
        m.atten_coeff_db_per_km = 0.0;
        assert!(m.validate().is_err());
        let mut m = ChannelModel::calibrated();
        m.sift_ratio = 1.2;
        assert!(m.validate().is_err());
    }

    #[test]
    fn degenerate_generator_is_flat() {
        let m = ChannelModel::calibrated().with_length(82.0).without_startup();
        let tr = TraceSynth::new(3600.0, 1).jitter(0.0).noise(false).generate(&m).unwrap();
        let skr = m.secret_key_rate();
        assert_eq!(tr.len(), 30);
        assert!(tr.events().iter().all(|e| e.dt_ns == 120 * NANOS_PER_SEC && e.skr_bps == skr));
    }

    #[test]
    fn generator_is_deterministic() {
        let m = ChannelModel::calibrated().with_length(100.0);
        let a = synthesize_trace(&m, 7200.0, 120.0, 0.2, 42).unwrap();
        let b = synthesize_trace(&m, 7200.0, 120.0, 0.2, 42).unwrap();
        let c = synthesize_trace(&m, 7200.0, 120.0, 0.2, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.end_s() >= 7200.0);
    }

    #[test]
    fn generator_noise_matches_calibration_at_54_km() {
        let m = ChannelModel::calibrated().with_length(54.0).without_startup();
        let tr = TraceSynth::new(400.0 * 3600.0, 7).generate(&m).unwrap();
        let n = tr.len() as f64;
        let mean = tr.events().iter().map(|e| e.skr_bps).sum::<f64>() / n;
        let sd = (tr.events().iter().map(|e| (e.skr_bps - mean).powi(2)).sum::<f64>() / n).sqrt();
        let qm = tr.events().iter().map(|e| e.qber).sum::<f64>() / n;
        let qsd = (tr.events().iter().map(|e| (e.qber - qm).powi(2)).sum::<f64>() / n).sqrt();
        let expected_sd = SKR_SIGMA_REF_BPS;
        assert!((sd - expected_sd).abs() < 0.05 * expected_sd, "sd {sd}");
        assert!((qsd - QBER_SIGMA).abs() < 0.05 * QBER_SIGMA, "qsd {qsd}");
        assert!((mean - m.secret_key_rate()).abs() < 0.01 * mean);
    }

    #[test]
    fn startup_delay_grows_with_distance() {
        let m = ChannelModel::calibrated();
        let d50 = m.with_length(50.0).startup_delay_s().unwrap();
        let d135 = m.with_length(135.0).startup_delay_s().unwrap();
        assert!((d50 - 110.0).abs() < 1e-9);
        assert!(d135 > 30.0 * 60.0 && d135 < 45.0 * 60.0, "{d135}");
    }

    #[test]
    fn load_three_rows() {
        let csv = "t_s,skr_bps,qber\n100,1000,0.04\n250.5,2000,0.05\n300,0,0.04\n";
        let tr = load_trace(csv.as_bytes()).unwrap();
        assert_eq!(tr.len(), 3);
        let ev = tr.events();
        assert_eq!(ev[0].start_ns, 0);
        for w in ev.windows(2) {
            assert_eq!(w[0].start_ns + w[0].dt_ns, w[1].start_ns);
        }
        assert_eq!(ev[1].key_bits(), 301_000);
        assert_eq!(tr.end_s(), 300.0);
    }

    #[test]
    fn load_empty_is_valid() {
        assert!(load_trace("".as_bytes()).unwrap().is_empty());
        assert!(load_trace("t_s,skr_bps,qber\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn load_errors_name_the_row() {
        let dup = "t_s,skr_bps,qber\n1,5,0.01\n2,5,0.01\n2,5,0.01\n";
        assert!(matches!(load_trace(dup.as_bytes()), Err(CoreError::TraceParse { row: 4, .. })));
        let neg = "t_s,skr_bps,qber\n1,-5,0.01\n";
        assert!(matches!(load_trace(neg.as_bytes()), Err(CoreError::TraceParse { row: 2, .. })));
        let junk = "t_s,skr_bps,qber\n1,5,0.01\nx,5,0.01\n";
        assert!(matches!(load_trace(junk.as_bytes()), Err(CoreError::TraceParse { row: 3, .. })));
        let short = "t_s,skr_bps,qber\n1,5\n";
        assert!(matches!(load_trace(short.as_bytes()), Err(CoreError::TraceParse { row: 2, .. })));
        let header = "time,rate,err\n1,5,0.01\n";
        assert!(matches!(load_trace(header.as_bytes()), Err(CoreError::TraceParse { row: 1, .. })));
    }

    #[test]
    fn write_then_load_preserves_trace() {
        let m = ChannelModel::calibrated().with_length(90.0);
        let tr = synthesize_trace(&m, 5000.0, 120.0, 0.2, 5).unwrap();
        let mut buf = Vec::new();
        write_trace(&tr, &mut buf).unwrap();
        let back = load_trace(buf.as_slice()).unwrap();
        assert_eq!(back, tr);
    }
}
