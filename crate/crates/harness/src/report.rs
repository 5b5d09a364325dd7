//! Per-cycle records and the aggregate latency table.

use std::io::Write;

use qkdlink_core::{Algorithm, LatencyRecord};
use serde::Serialize;
use uuid::Uuid;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CycleOutcome {
    Delivered,
    /// The KMS refused the key request: an availability violation.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub algorithm: Algorithm,
    pub key_id: Option<Uuid>,
    pub key_bits: u64,
    pub latency: LatencyRecord,
    /// Wall-clock time of the whole cycle on terminal A.
    pub wall_ns: u64,
    pub outcome: CycleOutcome,
    pub within_budget: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl StageStats {
    /// Mean and sample standard deviation; the mean is an exact integer sum divided once.
    pub fn of(ns: impl Iterator<Item = u64> + Clone) -> Self {
        let n = ns.clone().count();
        if n == 0 {
            return Self {
                mean_ms: 0.0,
                std_ms: 0.0,
            };
        }
        let sum: u128 = ns.clone().map(u128::from).sum();
        let mean_ns = sum as f64 / n as f64;
        let var = if n > 1 {
            ns.map(|x| (x as f64 - mean_ns).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean_ms: mean_ns * 1e-6,
            std_ms: var.sqrt() * 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub n_signals: u64,
    pub algorithm: Algorithm,
    pub period_ns: u64,
    pub cycles_requested: u64,
    pub records: Vec<CycleRecord>,
    /// Cycle at which an exhausted pool stopped the run under the halt policy.
    pub halted_at: Option<u64>,
}

impl RunReport {
    pub fn delivered(&self) -> impl Iterator<Item = &CycleRecord> + Clone {
        self.records.iter().filter(|r| r.outcome == CycleOutcome::Delivered)
    }

    pub fn delivered_count(&self) -> usize {
        self.delivered().count()
    }

    pub fn availability_violations(&self) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.outcome == CycleOutcome::Exhausted)
            .map(|r| r.cycle)
            .collect()
    }

    pub fn first_exhausted(&self) -> Option<u64> {
        self.availability_violations().first().copied()
    }

    pub fn budget_violations(&self) -> Vec<u64> {
        self.delivered().filter(|r| !r.within_budget).map(|r| r.cycle).collect()
    }

    pub fn debited_bits(&self) -> u64 {
        self.delivered().map(|r| r.key_bits).sum()
    }

    pub fn stats(&self, f: impl Fn(&LatencyRecord) -> u64 + Clone) -> StageStats {
        StageStats::of(self.delivered().map(move |r| f(&r.latency)))
    }

    pub fn total(&self) -> StageStats {
        self.stats(LatencyRecord::total_ns)
    }

    pub fn qkd(&self) -> StageStats {
        self.stats(LatencyRecord::qkd_ns)
    }

    pub fn crypto(&self) -> StageStats {
        self.stats(LatencyRecord::crypto_ns)
    }

    pub fn com(&self) -> StageStats {
        self.stats(LatencyRecord::com_ns)
    }

    /// `cycle,fetch_ms,key_a_ms,enc_ms,tx_ms,key_b_ms,dec_ms,total_ms` for delivered cycles.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| HarnessError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cycle", "fetch_ms", "key_a_ms", "enc_ms", "tx_ms", "key_b_ms", "dec_ms", "total_ms"])
            .map_err(io)?;
        let ms = |ns: u64| format!("{:.6}", ns as f64 * 1e-6);
        for r in self.delivered() {
            let l = &r.latency;
            w.write_record([
                r.cycle.to_string(),
                ms(l.fetch_a_ns),
                ms(l.key_a_ns),
                ms(l.enc_a_ns),
                ms(l.transmit_ns),
                ms(l.key_b_ns),
                ms(l.dec_b_ns),
                ms(l.total_ns()),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Table of mean and standard deviation for the total, QKD and crypto times.
    pub fn summary(&self) -> String {
        let (t, q, c, m) = (self.total(), self.qkd(), self.crypto(), self.com());
        let mut s = String::new();
        s.push_str(&format!(
            "{:<12} {:>6} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10}\n",
            "algorithm", "N", "total_ms", "std", "qkd_ms", "std", "crypto_ms", "std", "com_ms", "std"
        ));
        s.push_str(&format!(
            "{:<12} {:>6} {:>12.3} {:>10.3} {:>12.3} {:>10.3} {:>12.3} {:>10.3} {:>12.3} {:>10.3}\n",
            self.algorithm.name(),
            self.n_signals,
            t.mean_ms,
            t.std_ms,
            q.mean_ms,
            q.std_ms,
            c.mean_ms,
            c.std_ms,
            m.mean_ms,
            m.std_ms
        ));
        s.push_str(&format!(
            "cycles delivered {} of {}, key debited {} bits, over budget {}, exhausted {}",
            self.delivered_count(),
            self.cycles_requested,
            self.debited_bits(),
            self.budget_violations().len(),
            self.availability_violations().len(),
        ));
        if let Some(c) = self.halted_at {
            s.push_str(&format!(", halted at cycle {c}"));
        }
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_examples() {
        let s = StageStats::of([1_000_000u64, 3_000_000].into_iter());
        assert_eq!(s.mean_ms, 2.0);
        assert!((s.std_ms - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(StageStats::of(std::iter::empty()).mean_ms, 0.0);
        assert_eq!(StageStats::of([5u64].into_iter()).std_ms, 0.0);
    }
}
