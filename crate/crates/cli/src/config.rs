//! Scenario file schema (TOML). Every section is optional; omitted values fall back to the
//! calibrated model and the default study grid.

use std::path::{Path, PathBuf};

use qkdlink_core::pool::LeadSearch;
use qkdlink_core::model::load_trace;
use qkdlink_core::{Algorithm, ChannelModel, KeyGenTrace, QberProfile, TraceSynth, UseCaseConfig};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Environment variable that overrides `run.out`; only the output directory can be set this way.
pub const OUT_ENV: &str = "QKDLINK_OUT";

pub const STUDY_DISTANCES_KM: [f64; 21] = [
    50.0, 51.0, 52.0, 54.0, 58.0, 66.0, 70.0, 75.0, 82.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0, 120.0, 125.0,
    130.0, 135.0, 140.0, 145.0,
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub channel: ChannelSection,
    pub use_case: UseCaseSection,
    pub sweep: SweepSection,
    pub search: SearchSection,
    pub failure: FailureSection,
    pub run: RunSection,
    pub pool: PoolSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            channel: ChannelSection::default(),
            use_case: UseCaseSection::default(),
            sweep: SweepSection::default(),
            search: SearchSection::default(),
            failure: FailureSection::default(),
            run: RunSection::default(),
            pool: PoolSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub length_km: f64,
    pub atten_coeff_db_per_km: Option<f64>,
    pub source_rate_hz: Option<f64>,
    pub detector_efficiency: Option<f64>,
    pub sift_ratio: Option<f64>,
    pub ec_efficiency: Option<f64>,
    pub p1_lower: Option<f64>,
    pub e1_upper: Option<f64>,
    /// Constant QBER instead of the calibrated profile.
    pub qber: Option<f64>,
    /// `[[length_km, qber], ...]` profile.
    pub qber_anchors: Option<Vec<(f64, f64)>>,
    /// Long first distillation after start-up.
    pub startup: bool,
    pub cycle_period_s: f64,
    pub jitter: f64,
    pub noise: bool,
    pub trace_duration_s: f64,
    /// Measured trace (`t_s,skr_bps,qber`); replaces synthesis, distance grids collapse to `length_km`.
    pub trace: Option<PathBuf>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            length_km: 54.0,
            atten_coeff_db_per_km: None,
            source_rate_hz: None,
            detector_efficiency: None,
            sift_ratio: None,
            ec_efficiency: None,
            p1_lower: None,
            e1_upper: None,
            qber: None,
            qber_anchors: None,
            startup: true,
            cycle_period_s: qkdlink_core::model::DEFAULT_CYCLE_PERIOD_S,
            jitter: qkdlink_core::model::DEFAULT_JITTER,
            noise: true,
            trace_duration_s: 55_000.0,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UseCaseSection {
    pub n_signals: u64,
    pub sampling_rate_hz: f64,
    /// Defaults to the sampling rate.
    pub reporting_rate_hz: Option<f64>,
    pub precision_bits: u32,
    pub autonomy_target_s: f64,
    pub algorithm: Algorithm,
}

impl Default for UseCaseSection {
    fn default() -> Self {
        Self {
            n_signals: 68,
            sampling_rate_hz: 1.0,
            reporting_rate_hz: None,
            precision_bits: 32,
            autonomy_target_s: 0.0,
            algorithm: Algorithm::Otp,
        }
    }
}

impl UseCaseSection {
    pub fn to_config(&self) -> UseCaseConfig {
        UseCaseConfig {
            n_signals: self.n_signals,
            sampling_rate_hz: self.sampling_rate_hz,
            reporting_rate_hz: self.reporting_rate_hz.unwrap_or(self.sampling_rate_hz),
            precision_bits: self.precision_bits,
            autonomy_target_s: self.autonomy_target_s,
            algorithm: self.algorithm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub distances_km: Vec<f64>,
    pub n_signals: Vec<u64>,
    pub sampling_rates_hz: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Independent synthetic traces per distance; cells report the median.
    pub replicates: u32,
    /// Run cells on the rayon pool when the build supports it.
    pub parallel: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            distances_km: STUDY_DISTANCES_KM.to_vec(),
            n_signals: vec![68, 2000],
            sampling_rates_hz: vec![1.0, 10.0, 20.0],
            algorithms: vec![Algorithm::Otp],
            replicates: 1,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub horizon_s: f64,
    pub cap_s: f64,
    pub granularity_s: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = LeadSearch::default();
        Self {
            horizon_s: d.horizon_s,
            cap_s: d.cap_s,
            granularity_s: d.granularity_s,
        }
    }
}

impl SearchSection {
    pub fn to_search(self) -> LeadSearch {
        LeadSearch {
            horizon_s: self.horizon_s,
            cap_s: self.cap_s,
            granularity_s: self.granularity_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureSection {
    /// Failure times after the lead ends.
    pub offsets_s: Vec<f64>,
    /// Also report uptime after switching to this cipher at the failure.
    pub switch_to: Option<Algorithm>,
}

impl Default for FailureSection {
    fn default() -> Self {
        Self {
            offsets_s: vec![3600.0],
            switch_to: Some(Algorithm::Aes256),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Halt,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub cycles: u64,
    pub seed: u64,
    pub out: PathBuf,
    /// Run the two key servers behind their HTTP API instead of in process.
    pub http: bool,
    /// Generation stops before this cycle.
    pub fail_before_cycle: Option<u64>,
    pub switch_to: Option<Algorithm>,
    pub policy: Policy,
    pub realtime: bool,
    /// Lead time before the first cycle; the minimum lead is searched when omitted.
    pub lead_s: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            cycles: 100,
            seed: 1,
            out: PathBuf::from("out"),
            http: false,
            fail_before_cycle: None,
            switch_to: None,
            policy: Policy::Halt,
            realtime: false,
            lead_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSection {
    /// Timeline length after the lead.
    pub horizon_s: f64,
    pub lead_s: Option<f64>,
    /// Failure offset after the lead.
    pub fail_after_s: Option<f64>,
    pub switch_to: Option<Algorithm>,
}

impl Default for PoolSection {
    fn default() -> Self {
        Self {
            horizon_s: 36_000.0,
            lead_s: None,
            fail_after_s: Some(3600.0),
            switch_to: None,
        }
    }
}

fn strictly_sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn trace_path(&self) -> Option<PathBuf> {
        self.channel.trace.as_ref().map(|p| self.base_dir.join(p))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if let Some(p) = self.trace_path() {
            if !p.is_file() {
                return Err(CliError::Config(format!("trace file {} does not exist", p.display())));
            }
        }
        let s = &self.sweep;
        if s.distances_km.is_empty() || s.n_signals.is_empty() || s.sampling_rates_hz.is_empty() || s.algorithms.is_empty() {
            return bad("sweep grids must be non-empty");
        }
        if !strictly_sorted(&s.distances_km) || !strictly_sorted(&s.sampling_rates_hz) {
            return bad("sweep distances and sampling rates must be strictly increasing");
        }
        if !s.n_signals.windows(2).all(|w| w[0] < w[1]) {
            return bad("sweep signal counts must be strictly increasing");
        }
        if s.n_signals.contains(&0) {
            return bad("sweep signal counts must be positive");
        }
        if s.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.failure.offsets_s.is_empty() || !strictly_sorted(&self.failure.offsets_s) {
            return bad("failure offsets must be non-empty and strictly increasing");
        }
        if self.failure.offsets_s.iter().any(|&o| o < 0.0) {
            return bad("failure offsets must be >= 0");
        }
        self.use_case.to_config().validate()?;
        self.model(self.channel.length_km)?.validate()?;
        Ok(())
    }

    /// Channel model at `length_km` with the configured overrides.
    pub fn model(&self, length_km: f64) -> Result<ChannelModel> {
        let c = &self.channel;
        let mut m = ChannelModel::calibrated().with_length(length_km);
        macro_rules! set {
            ($($field:ident),*) => {$( if let Some(v) = c.$field { m.$field = v; } )*};
        }
        set!(atten_coeff_db_per_km, source_rate_hz, detector_efficiency, sift_ratio, ec_efficiency, p1_lower, e1_upper);
        if let Some(q) = c.qber {
            m.qber_profile = QberProfile::constant(q)?;
        }
        if let Some(a) = &c.qber_anchors {
            m.qber_profile = QberProfile::new(a.clone())?;
        }
        if !c.startup {
            m.startup = None;
        }
        Ok(m)
    }

    pub fn synth(&self, seed: u64) -> TraceSynth {
        TraceSynth::new(self.channel.trace_duration_s, seed)
            .cycle_period(self.channel.cycle_period_s)
            .jitter(self.channel.jitter)
            .noise(self.channel.noise)
    }

    /// The measured trace if configured, otherwise a synthetic one at `length_km`.
    pub fn trace(&self, length_km: f64, seed: u64) -> Result<KeyGenTrace> {
        match self.trace_path() {
            Some(p) => {
                let f = std::fs::File::open(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Ok(load_trace(std::io::BufReader::new(f))?)
            }
            None => Ok(self.synth(seed).generate(&self.model(length_km)?)?),
        }
    }

    /// Distances a sweep visits; a measured trace pins the single configured length.
    pub fn distances(&self) -> Vec<f64> {
        if self.channel.trace.is_some() {
            vec![self.channel.length_km]
        } else {
            self.sweep.distances_km.clone()
        }
    }

    /// Applies `--out` and the output-directory environment override, flag winning.
    pub fn resolve_out(&mut self, flag: Option<PathBuf>) {
        if let Ok(v) = std::env::var(OUT_ENV) {
            if !v.is_empty() {
                self.run.out = PathBuf::from(v);
            }
        }
        if let Some(p) = flag {
            self.run.out = p;
        }
    }
}
