//! Communication-parameter algebra: effective period, key demand, reusability factor,
//! tight key availability and the per-cycle latency budget.

use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::error::{CoreError, Result};
use crate::time::{nanos_to_secs, secs_to_nanos};

/// One secure-telemetry use case.
///
/// The reusability factor is not stored: it is 1 for OTP and follows from the cipher's
/// fixed key/IV refresh otherwise (see [`UseCaseConfig::reusability_factor`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseCaseConfig {
    pub n_signals: u64,
    pub sampling_rate_hz: f64,
    pub reporting_rate_hz: f64,
    #[serde(default = "default_precision")]
    pub precision_bits: u32,
    #[serde(default)]
    pub autonomy_target_s: f64,
    pub algorithm: Algorithm,
}

fn default_precision() -> u32 {
    32
}

impl UseCaseConfig {
    /// Reporting at the sampling rate, single precision, no autonomy target.
    pub fn new(n_signals: u64, sampling_rate_hz: f64, algorithm: Algorithm) -> Self {
        Self {
            n_signals,
            sampling_rate_hz,
            reporting_rate_hz: sampling_rate_hz,
            precision_bits: 32,
            autonomy_target_s: 0.0,
            algorithm,
        }
    }

    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return Err(CoreError::Config("sampling rate must be positive".into()));
        }
        if !(self.reporting_rate_hz > 0.0 && self.reporting_rate_hz.is_finite()) {
            return Err(CoreError::Config("reporting rate must be positive".into()));
        }
        if !matches!(self.precision_bits, 32 | 64) {
            return Err(CoreError::Config(format!(
                "precision must be 32 or 64 bits, got {}",
                self.precision_bits
            )));
        }
        if !(self.autonomy_target_s >= 0.0 && self.autonomy_target_s.is_finite()) {
            return Err(CoreError::Config("autonomy target must be >= 0".into()));
        }
        self.kappa().map(|_| ())
    }

    /// Samples per reporting batch, `f_s / f_rep`; must be a positive integer.
    pub fn kappa(&self) -> Result<u64> {
        let ratio = self.sampling_rate_hz / self.reporting_rate_hz;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * k {
            return Err(CoreError::Config(format!(
                "sampling/reporting ratio {ratio} is not a positive integer"
            )));
        }
        Ok(k as u64)
    }

    fn kappa_or_one(&self) -> u64 {
        self.kappa().unwrap_or(1)
    }

    pub fn effective_period_s(&self) -> f64 {
        (1.0 / self.sampling_rate_hz).max(1.0 / self.reporting_rate_hz)
    }

    pub fn effective_period_ns(&self) -> u64 {
        secs_to_nanos(self.effective_period_s())
    }

    /// Plaintext bits per reporting period, `N p kappa`.
    pub fn data_bits_per_period(&self) -> u64 {
        self.n_signals * u64::from(self.precision_bits) * self.kappa_or_one()
    }

    /// Key bits drawn from the pool per reporting period.
    pub fn key_demand_per_period(&self) -> u64 {
        match self.algorithm.fixed_key_material_bits() {
            None => self.data_bits_per_period(),
            Some(bits) => bits,
        }
    }

    /// Key bits consumed per data bit; 1 for OTP.
    pub fn reusability_factor(&self) -> f64 {
        match self.algorithm {
            Algorithm::Otp => 1.0,
            _ => self.key_demand_per_period() as f64 / self.data_bits_per_period() as f64,
        }
    }

    pub fn demand_rate_bps(&self) -> f64 {
        self.key_demand_per_period() as f64 / self.effective_period_s()
    }
}

pub fn effective_period(cfg: &UseCaseConfig) -> f64 {
    cfg.effective_period_s()
}

pub fn key_demand_per_period(cfg: &UseCaseConfig) -> u64 {
    cfg.key_demand_per_period()
}

pub fn reusability_factor(cfg: &UseCaseConfig) -> f64 {
    cfg.reusability_factor()
}

/// Average-rate availability: the demand of one period fits into what the link
/// distills over that period. Equality counts as available.
pub fn tight_availability(cfg: &UseCaseConfig, avg_skr_bps: f64) -> bool {
    cfg.key_demand_per_period() as f64 <= avg_skr_bps * cfg.effective_period_s()
}

/// Stage timings of one loop iteration in integer nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub fetch_a_ns: u64,
    pub key_a_ns: u64,
    pub enc_a_ns: u64,
    pub transmit_ns: u64,
    pub key_b_ns: u64,
    pub dec_b_ns: u64,
    pub action_b_ns: u64,
}

impl LatencyRecord {
    pub fn qkd_ns(&self) -> u64 {
        self.key_a_ns + self.key_b_ns
    }

    pub fn crypto_ns(&self) -> u64 {
        self.enc_a_ns + self.dec_b_ns
    }

    pub fn com_ns(&self) -> u64 {
        self.fetch_a_ns + self.transmit_ns
    }

    pub fn total_ns(&self) -> u64 {
        self.fetch_a_ns
            + self.key_a_ns
            + self.enc_a_ns
            + self.transmit_ns
            + self.key_b_ns
            + self.dec_b_ns
            + self.action_b_ns
    }

    /// Total without the analysis/action stage, which the budget check ignores.
    pub fn loop_ns(&self) -> u64 {
        self.total_ns() - self.action_b_ns
    }

    pub fn total_s(&self) -> f64 {
        nanos_to_secs(self.total_ns())
    }

    pub fn stages(&self) -> [u64; 7] {
        [
            self.fetch_a_ns,
            self.key_a_ns,
            self.enc_a_ns,
            self.transmit_ns,
            self.key_b_ns,
            self.dec_b_ns,
            self.action_b_ns,
        ]
    }
}

/// True when the loop fits inside one effective period.
pub fn latency_ok(rec: &LatencyRecord, cfg: &UseCaseConfig) -> bool {
    rec.loop_ns() <= cfg.effective_period_ns()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelModel;

    fn cfg(n: u64, fs: f64, frep: f64, alg: Algorithm) -> UseCaseConfig {
        UseCaseConfig {
            reporting_rate_hz: frep,
            ..UseCaseConfig::new(n, fs, alg)
        }
    }

    #[test]
    fn effective_period_examples() {
        assert_eq!(cfg(1, 1.0, 1.0, Algorithm::Otp).effective_period_s(), 1.0);
        assert_eq!(cfg(1, 10.0, 1.0, Algorithm::Otp).effective_period_s(), 1.0);
        assert_eq!(cfg(1, 10.0, 10.0, Algorithm::Otp).effective_period_s(), 0.1);
        assert_eq!(cfg(1, 10.0, 10.0, Algorithm::Otp).effective_period_ns(), 100_000_000);
    }

    #[test]
    fn demand_examples() {
        assert_eq!(cfg(2000, 1.0, 1.0, Algorithm::Otp).key_demand_per_period(), 64_000);
        assert_eq!(cfg(68, 1.0, 1.0, Algorithm::Otp).key_demand_per_period(), 2_176);
        for n in [0, 68, 2000, 10_000] {
            assert_eq!(cfg(n, 1.0, 1.0, Algorithm::Aes256).key_demand_per_period(), 384);
        }
        assert_eq!(cfg(68, 10.0, 1.0, Algorithm::Otp).key_demand_per_period(), 21_760);
        assert_eq!(cfg(68, 10.0, 1.0, Algorithm::Aes256).key_demand_per_period(), 384);
    }

    #[test]
    fn kappa_must_be_integer() {
        assert_eq!(cfg(1, 20.0, 2.0, Algorithm::Otp).kappa().unwrap(), 10);
        assert!(cfg(1, 1.0, 2.0, Algorithm::Otp).validate().is_err());
        assert!(cfg(1, 3.0, 2.0, Algorithm::Otp).validate().is_err());
        let mut c = cfg(1, 1.0, 1.0, Algorithm::Otp);
        c.precision_bits = 16;
        assert!(c.validate().is_err());
    }

    #[test]
    fn reusability_examples() {
        let aes68 = cfg(68, 1.0, 1.0, Algorithm::Aes256).reusability_factor();
        // 384 / 2176 = 17.6%, quoted truncated to whole percent.
        assert_eq!((aes68 * 100.0).floor(), 17.0, "{aes68}");
        assert_eq!(cfg(2000, 1.0, 1.0, Algorithm::Aes256).reusability_factor(), 0.006);
        assert_eq!(cfg(2000, 1.0, 1.0, Algorithm::Ascon128).reusability_factor(), 0.004);
        assert_eq!(cfg(2000, 1.0, 1.0, Algorithm::Ascon80pq).reusability_factor(), 0.0045);
        assert_eq!(cfg(68, 20.0, 1.0, Algorithm::Otp).reusability_factor(), 1.0);
    }

    #[test]
    fn tight_availability_examples() {
        let model = ChannelModel::calibrated();
        let c = cfg(2000, 1.0, 1.0, Algorithm::Otp);
        assert!(tight_availability(&c, model.with_length(82.0).secret_key_rate()));
        assert!(!tight_availability(&c, model.with_length(90.0).secret_key_rate()));
        assert!(tight_availability(&cfg(0, 1.0, 1.0, Algorithm::Otp), 0.0));
        assert!(tight_availability(&cfg(68, 1.0, 1.0, Algorithm::Otp), 2_176.0));
        assert!(!tight_availability(&cfg(68, 1.0, 1.0, Algorithm::Otp), 2_175.999));
    }

    #[test]
    fn latency_examples() {
        let slow = LatencyRecord {
            key_a_ns: 200_000_000,
            enc_a_ns: 95_000_000,
            transmit_ns: 100_000_000,
            ..Default::default()
        };
        assert_eq!(slow.total_ns(), 395_000_000);
        assert!(latency_ok(&slow, &cfg(2000, 1.0, 1.0, Algorithm::Otp)));
        assert!(!latency_ok(&slow, &cfg(2000, 10.0, 10.0, Algorithm::Otp)));
        assert!(latency_ok(&LatencyRecord::default(), &cfg(1, 10.0, 10.0, Algorithm::Otp)));
    }

    #[test]
    fn action_time_is_carried_but_not_judged() {
        let rec = LatencyRecord {
            key_a_ns: 900_000_000,
            action_b_ns: 500_000_000,
            ..Default::default()
        };
        assert_eq!(rec.total_ns(), 1_400_000_000);
        assert_eq!(rec.qkd_ns() + rec.crypto_ns() + rec.com_ns() + rec.action_b_ns, rec.total_ns());
        assert!(latency_ok(&rec, &cfg(1, 1.0, 1.0, Algorithm::Otp)));
    }
}
