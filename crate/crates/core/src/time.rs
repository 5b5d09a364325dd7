//! Integer-nanosecond time base shared by traces and the pool engine.

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Seconds to nanoseconds, rounded to the nearest nanosecond.
pub fn secs_to_nanos(secs: f64) -> u64 {
    debug_assert!(secs >= 0.0);
    (secs * NANOS_PER_SEC as f64).round() as u64
}

pub fn nanos_to_secs(nanos: u64) -> f64 {
    nanos as f64 / NANOS_PER_SEC as f64
}

/// Smallest step index `k` with `t_ns <= k * step_ns`.
pub fn credit_step(t_ns: u64, step_ns: u64) -> u64 {
    t_ns.div_ceil(step_ns)
}

/// Number of whole steps spanning `secs`, rounded up.
pub fn steps_ceil(secs: f64, step_ns: u64) -> u64 {
    secs_to_nanos(secs).div_ceil(step_ns)
}

/// Number of whole steps contained in `secs`, rounded down.
pub fn steps_floor(secs: f64, step_ns: u64) -> u64 {
    secs_to_nanos(secs) / step_ns
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn credit_step_is_inclusive() {
        assert_eq!(credit_step(60 * NANOS_PER_SEC, NANOS_PER_SEC), 60);
        assert_eq!(credit_step(60 * NANOS_PER_SEC + 1, NANOS_PER_SEC), 61);
        assert_eq!(credit_step(0, NANOS_PER_SEC), 0);
    }

    #[test]
    fn tenth_second_steps_are_exact() {
        let step = secs_to_nanos(0.1);
        assert_eq!(step, 100_000_000);
        assert_eq!(steps_ceil(36_000.0, step), 360_000);
    }
}
