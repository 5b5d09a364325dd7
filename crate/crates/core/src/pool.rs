//! Dynamic key-pool ledger and the scenario engine built on it.
//!
//! Time is discretized into effective periods of `step_ns`. A distillation cycle is
//! credited at the first step boundary at or after its completion; consumption at step
//! `i` is `n~[i]`: nothing up to the lead step, `n` per period until the failure step and
//! `n_pf` after it. Generation stops at the failure step. All accounting is in whole bits.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::comm::UseCaseConfig;
use crate::error::{CoreError, Result};
use crate::model::KeyGenTrace;
use crate::time::{credit_step, nanos_to_secs, secs_to_nanos, steps_ceil};

/// Default lead-time search: 10 h horizon, 5 h cap, 1 min grid.
pub const DEFAULT_HORIZON_S: f64 = 36_000.0;
pub const DEFAULT_CAP_S: f64 = 18_000.0;
pub const DEFAULT_GRANULARITY_S: f64 = 60.0;

/// Three-phase consumption profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConsumptionSchedule {
    pub step_ns: u64,
    pub lead_steps: u64,
    pub normal_bits_per_period: u64,
    pub post_failure_bits_per_period: u64,
    pub fail_step: Option<u64>,
}

impl ConsumptionSchedule {
    pub fn new(step_ns: u64, lead_steps: u64, normal_bits_per_period: u64) -> Self {
        Self {
            step_ns,
            lead_steps,
            normal_bits_per_period,
            post_failure_bits_per_period: normal_bits_per_period,
            fail_step: None,
        }
    }

    /// Schedule for a use case with the given lead time, rounded up to whole periods.
    pub fn for_use_case(cfg: &UseCaseConfig, lead_s: f64) -> Self {
        let step_ns = cfg.effective_period_ns();
        Self::new(step_ns, steps_ceil(lead_s, step_ns), cfg.key_demand_per_period())
    }

    /// Failure `offset_s` after the lead ends; the post-failure demand defaults to the normal one.
    pub fn with_failure_after(mut self, offset_s: f64) -> Self {
        self.fail_step = Some(self.lead_steps + steps_ceil(offset_s, self.step_ns));
        self
    }

    pub fn with_fail_step(mut self, fail_step: u64) -> Self {
        self.fail_step = Some(fail_step);
        self
    }

    pub fn with_post_failure_demand(mut self, bits_per_period: u64) -> Self {
        self.post_failure_bits_per_period = bits_per_period;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_ns == 0 {
            return Err(CoreError::Config("pool step must be positive".into()));
        }
        if let Some(f) = self.fail_step {
            if f < self.lead_steps {
                return Err(CoreError::FailBeforeLead {
                    fail_step: f,
                    lead_steps: self.lead_steps,
                });
            }
        }
        Ok(())
    }

    /// Consumption `n~[i]` charged at step `i`.
    pub fn consumption_at(&self, i: u64) -> u64 {
        if i <= self.lead_steps {
            0
        } else if self.fail_step.is_none_or(|f| i <= f) {
            self.normal_bits_per_period
        } else {
            self.post_failure_bits_per_period
        }
    }

    /// `sum_{i <= k} n~[i]` in closed form.
    pub fn consumed_until(&self, k: u64) -> u64 {
        let lead = self.lead_steps;
        match self.fail_step {
            None => self.normal_bits_per_period * k.saturating_sub(lead),
            Some(f) => {
                let normal = k.min(f).saturating_sub(lead);
                let post = k.saturating_sub(f.max(lead));
                self.normal_bits_per_period * normal + self.post_failure_bits_per_period * post
            }
        }
    }

    /// Last step boundary at which generation is still credited.
    pub fn generation_cutoff_ns(&self) -> Option<u64> {
        self.fail_step.map(|f| f * self.step_ns)
    }
}

/// Cumulative key credits per step, derived from a trace for one step size.
#[derive(Debug, Clone)]
pub struct CreditCurve {
    step_ns: u64,
    steps: Vec<u64>,
    cum_bits: Vec<u64>,
    covered_ns: u64,
}

impl CreditCurve {
    /// Credits every cycle completing no later than `cutoff_ns` (all cycles when `None`).
    pub fn new(trace: &KeyGenTrace, step_ns: u64, cutoff_ns: Option<u64>) -> Self {
        let mut steps: Vec<u64> = Vec::new();
        let mut cum_bits: Vec<u64> = Vec::new();
        let mut total = 0u64;
        for e in trace.events() {
            if cutoff_ns.is_some_and(|c| e.end_ns() > c) {
                break;
            }
            total += e.key_bits();
            let k = credit_step(e.end_ns(), step_ns);
            if steps.last() == Some(&k) {
                *cum_bits.last_mut().expect("parallel vectors") = total;
            } else {
                steps.push(k);
                cum_bits.push(total);
            }
        }
        Self {
            step_ns,
            steps,
            cum_bits,
            covered_ns: trace.end_ns(),
        }
    }

    /// Generated bits credited by step `k`.
    pub fn at(&self, k: u64) -> u64 {
        match self.steps.partition_point(|&s| s <= k) {
            0 => 0,
            i => self.cum_bits[i - 1],
        }
    }

    /// Credit steps in `(from, to]`.
    fn steps_in(&self, from: u64, to: u64) -> &[u64] {
        let lo = self.steps.partition_point(|&s| s <= from);
        let hi = self.steps.partition_point(|&s| s <= to);
        &self.steps[lo..hi]
    }

    fn require_coverage(&self, steps: u64) -> Result<()> {
        let required = steps * self.step_ns;
        if self.covered_ns < required {
            return Err(CoreError::TraceTooShort {
                covered_s: nanos_to_secs(self.covered_ns),
                required_s: nanos_to_secs(required),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PoolEntry {
    pub k: u64,
    pub d_bits: i64,
    pub gen_cum: u64,
    pub cons_cum: u64,
}

impl PoolEntry {
    /// Key available at this step (`d > 0`).
    pub fn available(&self) -> bool {
        self.d_bits > 0
    }
}

/// Pool ledger over steps `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolTimeline {
    pub step_ns: u64,
    pub entries: Vec<PoolEntry>,
    pub k_lead: u64,
    pub k_fail: Option<u64>,
    /// First step after the failure with `d <= 0`.
    pub k_exhaust: Option<u64>,
    /// Reserve at the lead step.
    pub d0_bits: i64,
}

impl PoolTimeline {
    pub fn step_s(&self) -> f64 {
        nanos_to_secs(self.step_ns)
    }

    pub fn d(&self, k: u64) -> Option<i64> {
        self.entries.get(k as usize).map(|e| e.d_bits)
    }

    /// First step after the lead where the pool is not positive.
    pub fn first_shortfall(&self) -> Option<u64> {
        self.entries
            .iter()
            .skip(self.k_lead as usize + 1)
            .find(|e| !e.available())
            .map(|e| e.k)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| CoreError::Io(e.to_string());
        w.write_record(["k", "t_s", "d_bits", "gen_cum", "cons_cum"])
            .map_err(io)?;
        for e in &self.entries {
            w.write_record([
                e.k.to_string(),
                nanos_to_secs(e.k * self.step_ns).to_string(),
                e.d_bits.to_string(),
                e.gen_cum.to_string(),
                e.cons_cum.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Steps the ledger `d[k] = gen[k] - cons[k]` from `k = 0` to `horizon_steps`.
pub fn simulate_pool(
    trace: &KeyGenTrace,
    schedule: &ConsumptionSchedule,
    horizon_steps: u64,
) -> Result<PoolTimeline> {
    schedule.validate()?;
    let curve = CreditCurve::new(trace, schedule.step_ns, schedule.generation_cutoff_ns());
    let needed = schedule.fail_step.map_or(horizon_steps, |f| f.min(horizon_steps));
    curve.require_coverage(needed)?;

    let events = trace.events();
    let cutoff = schedule.generation_cutoff_ns();
    let mut next = 0usize;
    let mut gen = 0u64;
    let mut cons = 0u64;
    let mut entries = Vec::with_capacity(horizon_steps as usize + 1);
    for k in 0..=horizon_steps {
        let boundary = k * schedule.step_ns;
        while next < events.len()
            && events[next].end_ns() <= boundary
            && cutoff.is_none_or(|c| events[next].end_ns() <= c)
        {
            gen += events[next].key_bits();
            next += 1;
        }
        cons += schedule.consumption_at(k);
        entries.push(PoolEntry {
            k,
            d_bits: gen as i64 - cons as i64,
            gen_cum: gen,
            cons_cum: cons,
        });
    }
    let k_exhaust = schedule.fail_step.and_then(|f| {
        entries
            .iter()
            .skip(f as usize + 1)
            .find(|e| e.d_bits <= 0)
            .map(|e| e.k)
    });
    let d0_bits = entries
        .get(schedule.lead_steps as usize)
        .map_or_else(|| curve.at(schedule.lead_steps) as i64, |e| e.d_bits);
    Ok(PoolTimeline {
        step_ns: schedule.step_ns,
        entries,
        k_lead: schedule.lead_steps,
        k_fail: schedule.fail_step,
        k_exhaust,
        d0_bits,
    })
}

/// Outcome of a lead-time or reserve search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Viability {
    Viable(f64),
    NonViable,
}

impl Viability {
    pub fn is_viable(&self) -> bool {
        matches!(self, Viability::Viable(_))
    }

    pub fn secs(&self) -> Option<f64> {
        match *self {
            Viability::Viable(s) => Some(s),
            Viability::NonViable => None,
        }
    }

    /// Seconds, with non-viable mapped to infinity for ordering and medians.
    pub fn secs_or_inf(&self) -> f64 {
        self.secs().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Viability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Viability::Viable(s) => write!(f, "{s}"),
            Viability::NonViable => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadSearch {
    pub horizon_s: f64,
    pub cap_s: f64,
    pub granularity_s: f64,
}

impl Default for LeadSearch {
    fn default() -> Self {
        Self {
            horizon_s: DEFAULT_HORIZON_S,
            cap_s: DEFAULT_CAP_S,
            granularity_s: DEFAULT_GRANULARITY_S,
        }
    }
}

/// True when `d[k] > 0` for every `k` in `(lead, lead + horizon]` with no failure.
///
/// Between credits the pool only shrinks, so it suffices to test the step just before
/// each credit, the first consuming step and the last step.
pub fn lead_is_sufficient(curve: &CreditCurve, n: u64, lead: u64, horizon: u64) -> bool {
    let end = lead + horizon;
    let d = |k: u64| curve.at(k) as i64 - (n * (k - lead)) as i64;
    if horizon == 0 {
        return true;
    }
    if d(lead + 1) <= 0 || d(end) <= 0 {
        return false;
    }
    curve
        .steps_in(lead + 1, end)
        .iter()
        .all(|&c| d(c - 1) > 0)
}

/// Smallest lead on the search grid keeping the pool positive over the horizon.
pub fn min_lead_time(trace: &KeyGenTrace, cfg: &UseCaseConfig, search: &LeadSearch) -> Result<Viability> {
    cfg.validate()?;
    let n = cfg.key_demand_per_period();
    if n == 0 {
        return Ok(Viability::Viable(0.0));
    }
    let step_ns = cfg.effective_period_ns();
    let curve = CreditCurve::new(trace, step_ns, None);
    lead_search(&curve, n, step_ns, search)
}

/// Grid search over a prepared credit curve; shared across use cases on one trace.
pub fn lead_search(curve: &CreditCurve, n: u64, step_ns: u64, search: &LeadSearch) -> Result<Viability> {
    if n == 0 {
        return Ok(Viability::Viable(0.0));
    }
    if !(search.granularity_s > 0.0 && search.cap_s >= 0.0 && search.horizon_s >= 0.0) {
        return Err(CoreError::Config("lead search needs a positive grid and non-negative cap/horizon".into()));
    }
    let horizon = steps_ceil(search.horizon_s, step_ns);
    let grid_ns = secs_to_nanos(search.granularity_s);
    let cap_ns = secs_to_nanos(search.cap_s);
    let mut lead_ns = 0u64;
    while lead_ns <= cap_ns {
        let lead = lead_ns.div_ceil(step_ns);
        curve.require_coverage(lead + horizon)?;
        if lead_is_sufficient(curve, n, lead, horizon) {
            return Ok(Viability::Viable(nanos_to_secs(lead_ns)));
        }
        lead_ns += grid_ns;
    }
    Ok(Viability::NonViable)
}

/// Post-failure operating time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Uptime {
    /// Whole periods the reserve fully serves, and their duration.
    Finite { steps: u64, secs: f64 },
    /// No post-failure demand.
    Unbounded,
}

impl Uptime {
    pub fn secs(&self) -> f64 {
        match *self {
            Uptime::Finite { secs, .. } => secs,
            Uptime::Unbounded => f64::INFINITY,
        }
    }

    pub fn hours(&self) -> f64 {
        self.secs() / 3600.0
    }
}

impl fmt::Display for Uptime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Uptime::Finite { secs, .. } => write!(f, "{secs}"),
            Uptime::Unbounded => f.write_str("> horizon"),
        }
    }
}

fn failed_schedule(schedule: &ConsumptionSchedule) -> Result<u64> {
    schedule.validate()?;
    schedule
        .fail_step
        .ok_or_else(|| CoreError::Config("schedule has no failure step".into()))
}

/// Reserve `d[k_fail]` left when generation stops.
pub fn reserve_at_failure(trace: &KeyGenTrace, schedule: &ConsumptionSchedule) -> Result<i64> {
    let f = failed_schedule(schedule)?;
    let curve = CreditCurve::new(trace, schedule.step_ns, schedule.generation_cutoff_ns());
    curve.require_coverage(f)?;
    Ok(curve.at(f) as i64 - schedule.consumed_until(f) as i64)
}

/// Time the reserve sustains post-failure demand: `floor(d[k_fail] / n_pf)` periods.
pub fn post_failure_uptime(trace: &KeyGenTrace, schedule: &ConsumptionSchedule) -> Result<Uptime> {
    let reserve = reserve_at_failure(trace, schedule)?;
    let n_pf = schedule.post_failure_bits_per_period;
    if n_pf == 0 {
        return Ok(Uptime::Unbounded);
    }
    let steps = if reserve > 0 { reserve as u64 / n_pf } else { 0 };
    Ok(Uptime::Finite {
        steps,
        secs: nanos_to_secs(steps * schedule.step_ns),
    })
}

/// Uptime after switching to `post_algorithm` at the failure step.
pub fn uptime_with_switch(
    trace: &KeyGenTrace,
    schedule_pre: &ConsumptionSchedule,
    cfg: &UseCaseConfig,
    post_algorithm: crate::Algorithm,
) -> Result<Uptime> {
    let n_pf = cfg.with_algorithm(post_algorithm).key_demand_per_period();
    post_failure_uptime(trace, &schedule_pre.with_post_failure_demand(n_pf))
}

/// Periods of autonomy required, rounded up.
pub fn autonomy_steps(t_auto_s: f64, step_ns: u64) -> u64 {
    steps_ceil(t_auto_s, step_ns)
}

/// Reserve form: `d[k_fail] >= sum of n~ over (k_fail, k_fail + k_auto]`.
pub fn autonomy_split(trace: &KeyGenTrace, schedule: &ConsumptionSchedule, t_auto_s: f64) -> Result<bool> {
    let f = failed_schedule(schedule)?;
    let reserve = reserve_at_failure(trace, schedule)?;
    let k_auto = autonomy_steps(t_auto_s, schedule.step_ns);
    let demand: u64 = schedule.post_failure_bits_per_period * k_auto;
    debug_assert_eq!(demand, schedule.consumed_until(f + k_auto) - schedule.consumed_until(f));
    Ok(reserve >= demand as i64)
}

/// Grouped form: generated bits up to the failure cover the whole consumption up to
/// `k_fail + k_auto`, each term summed independently.
pub fn autonomy_grouped(trace: &KeyGenTrace, schedule: &ConsumptionSchedule, t_auto_s: f64) -> Result<bool> {
    let f = failed_schedule(schedule)?;
    let cutoff = schedule.generation_cutoff_ns();
    trace_covers(trace, f * schedule.step_ns)?;
    let generated: u64 = trace
        .events()
        .iter()
        .filter(|e| cutoff.is_none_or(|c| e.end_ns() <= c))
        .map(|e| e.key_bits())
        .sum();
    let k_auto = autonomy_steps(t_auto_s, schedule.step_ns);
    let consumed: u64 = (0..=f + k_auto).map(|i| schedule.consumption_at(i)).sum();
    Ok(generated as i128 - consumed as i128 >= 0)
}

fn trace_covers(trace: &KeyGenTrace, required_ns: u64) -> Result<()> {
    if trace.end_ns() < required_ns {
        return Err(CoreError::TraceTooShort {
            covered_s: trace.end_s(),
            required_s: nanos_to_secs(required_ns),
        });
    }
    Ok(())
}

/// Whether the reserve at failure lasts at least `t_auto_s`.
pub fn autonomy_condition(trace: &KeyGenTrace, schedule: &ConsumptionSchedule, t_auto_s: f64) -> Result<bool> {
    autonomy_split(trace, schedule, t_auto_s)
}

/// Smallest failure time (seconds since start) meeting the autonomy target under average
/// rates: `t_fail (S - n/dtau) >= (n_pf t_auto - n t_lead) / dtau` with `t_fail >= t_lead`.
pub fn simplified_min_reserve(
    avg_skr: f64,
    n_bar: f64,
    n_pf_bar: f64,
    dtau: f64,
    t_lead: f64,
    t_auto: f64,
) -> Viability {
    let r = avg_skr - n_bar / dtau;
    let c = (n_pf_bar * t_auto - n_bar * t_lead) / dtau;
    if r > 0.0 {
        Viability::Viable(t_lead.max(c / r))
    } else if r == 0.0 {
        if c <= 0.0 {
            Viability::Viable(t_lead)
        } else {
            Viability::NonViable
        }
    } else if c / r >= t_lead {
        Viability::Viable(t_lead)
    } else {
        Viability::NonViable
    }
}
