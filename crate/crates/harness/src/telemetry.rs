//! Synthetic reactor-style telemetry: bounded random walks, one per signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    pub cycle: u64,
    pub timestamp_s: f64,
    /// `values[0]` is the timestamp channel.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Channel {
    lo: f64,
    hi: f64,
    step: Normal<f64>,
    value: f64,
}

/// Infinite, seeded frame source at `f_s`.
///
/// Values are rounded to single precision so that they survive 32-bit encoding exactly.
#[derive(Debug, Clone)]
pub struct TelemetrySource {
    n_signals: usize,
    sampling_rate_hz: f64,
    rng: ChaCha8Rng,
    channels: Vec<Channel>,
    next: u64,
}

impl TelemetrySource {
    pub fn new(n_signals: usize, sampling_rate_hz: f64, seed: u64) -> Self {
        assert!(sampling_rate_hz > 0.0, "sampling rate must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = (1..n_signals)
            .map(|_| {
                let centre: f64 = rng.gen_range(-500.0..500.0);
                let span: f64 = rng.gen_range(1.0..100.0);
                let sigma = span * rng.gen_range(0.001..0.02);
                Channel {
                    lo: centre - span,
                    hi: centre + span,
                    step: Normal::new(0.0, sigma).expect("positive sigma"),
                    value: centre + rng.gen_range(-span..span) * 0.5,
                }
            })
            .collect();
        Self {
            n_signals,
            sampling_rate_hz,
            rng,
            channels,
            next: 0,
        }
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn next_frame(&mut self) -> TelemetryFrame {
        let cycle = self.next;
        self.next += 1;
        let timestamp_s = f64::from((cycle as f64 / self.sampling_rate_hz) as f32);
        let mut values = Vec::with_capacity(self.n_signals);
        if self.n_signals > 0 {
            values.push(timestamp_s);
        }
        for ch in &mut self.channels {
            let mut v = ch.value + ch.step.sample(&mut self.rng);
            // Reflect at the bounds.
            if v > ch.hi {
                v = 2.0 * ch.hi - v;
            }
            if v < ch.lo {
                v = 2.0 * ch.lo - v;
            }
            ch.value = v.clamp(ch.lo, ch.hi);
            values.push(f64::from(ch.value as f32));
        }
        TelemetryFrame {
            cycle,
            timestamp_s,
            values,
        }
    }
}

impl Iterator for TelemetrySource {
    type Item = TelemetryFrame;

    fn next(&mut self) -> Option<TelemetryFrame> {
        Some(self.next_frame())
    }
}

/// `round(duration * f_s)` frames.
pub fn generate_telemetry(n_signals: usize, sampling_rate_hz: f64, duration_s: f64, seed: u64) -> Vec<TelemetryFrame> {
    let count = (duration_s * sampling_rate_hz).round().max(0.0) as usize;
    TelemetrySource::new(n_signals, sampling_rate_hz, seed).take(count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_counts() {
        let f = generate_telemetry(68, 1.0, 10.0, 1);
        assert_eq!(f.len(), 10);
        assert!(f.iter().all(|x| x.values.len() == 68));
        assert_eq!(generate_telemetry(2000, 10.0, 60.0, 1).len(), 600);
    }

    #[test]
    fn deterministic_and_increasing() {
        let a = generate_telemetry(20, 10.0, 30.0, 9);
        assert_eq!(a, generate_telemetry(20, 10.0, 30.0, 9));
        assert_ne!(a, generate_telemetry(20, 10.0, 30.0, 10));
        assert!(a.windows(2).all(|w| w[1].values[0] > w[0].values[0]));
    }

    #[test]
    fn values_are_single_precision() {
        for f in generate_telemetry(50, 1.0, 100.0, 3) {
            assert!(f.values.iter().all(|&v| f64::from(v as f32) == v));
        }
    }
}
