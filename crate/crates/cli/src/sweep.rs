//! Lead-time and failure-uptime sweeps over the configured grid.

use qkdlink_core::pool::{min_lead_time, post_failure_uptime, LeadSearch};
use qkdlink_core::{Algorithm, ConsumptionSchedule, Execution, KeyGenTrace, UseCaseConfig, Uptime, Viability};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::Result;

/// One sweep cell's aggregated value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CellValue {
    Value(f64),
    NonViable,
    /// The cell could not be evaluated (for example the trace is too short).
    Error(String),
}

impl CellValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            CellValue::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_nonviable(&self) -> bool {
        matches!(self, CellValue::NonViable)
    }

    /// Table text: the number with `decimals`, `-` for non-viable, `error` otherwise.
    pub fn render(&self, decimals: usize) -> String {
        match self {
            CellValue::Value(v) => format!("{v:.decimals$}"),
            CellValue::NonViable => "-".into(),
            CellValue::Error(_) => "error".into(),
        }
    }

    fn scaled(self, k: f64) -> Self {
        match self {
            CellValue::Value(v) => CellValue::Value(v * k),
            other => other,
        }
    }
}

/// Median with non-viable replicates counted as +inf.
pub fn median_cell(samples: &[std::result::Result<f64, String>]) -> CellValue {
    if let Some(Err(e)) = samples.iter().find(|s| s.is_err()) {
        return CellValue::Error(e.clone());
    }
    let mut v: Vec<f64> = samples.iter().map(|s| *s.as_ref().expect("checked")).collect();
    if v.is_empty() {
        return CellValue::Error("no replicates".into());
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    if m.is_finite() {
        CellValue::Value(m)
    } else {
        CellValue::NonViable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub distance_km: f64,
    pub n_signals: u64,
    pub sampling_rate_hz: f64,
    pub algorithm: Algorithm,
}

impl Cell {
    /// Sweeps report at the sampling rate.
    pub fn use_case(&self, base: &UseCaseConfig) -> UseCaseConfig {
        UseCaseConfig {
            n_signals: self.n_signals,
            sampling_rate_hz: self.sampling_rate_hz,
            reporting_rate_hz: self.sampling_rate_hz,
            algorithm: self.algorithm,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadRow {
    pub cell: Cell,
    /// Minimum lead in seconds.
    pub lead_s: CellValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailRow {
    pub cell: Cell,
    pub fail_offset_s: f64,
    pub lead_s: CellValue,
    pub uptime_h: CellValue,
    pub switch_to: Option<Algorithm>,
    pub switch_uptime_h: Option<CellValue>,
}

/// Seed of replicate `r` at distance index `i`: independent of grid order beyond the index.
pub fn replicate_seed(base: u64, distance_index: usize, replicate: u32) -> u64 {
    let mut z = base
        .wrapping_add((distance_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(u64::from(replicate).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Traces per distance: `out[i][r]`.
pub fn build_traces(cfg: &ScenarioConfig, seed: u64, exec: Execution) -> Result<Vec<Vec<KeyGenTrace>>> {
    let jobs: Vec<(usize, f64, u32)> = cfg
        .distances()
        .into_iter()
        .enumerate()
        .flat_map(|(i, d)| (0..cfg.sweep.replicates).map(move |r| (i, d, r)))
        .collect();
    let traces = exec.map(&jobs, |&(i, d, r)| cfg.trace(d, replicate_seed(seed, i, r)));
    let mut out: Vec<Vec<KeyGenTrace>> = vec![Vec::new(); cfg.distances().len()];
    for ((i, _, _), t) in jobs.iter().zip(traces) {
        out[*i].push(t?);
    }
    Ok(out)
}

pub fn cells(cfg: &ScenarioConfig) -> Vec<(usize, Cell)> {
    let s = &cfg.sweep;
    let mut out = Vec::new();
    for (i, &distance_km) in cfg.distances().iter().enumerate() {
        for &algorithm in &s.algorithms {
            for &n_signals in &s.n_signals {
                for &sampling_rate_hz in &s.sampling_rates_hz {
                    out.push((
                        i,
                        Cell {
                            distance_km,
                            n_signals,
                            sampling_rate_hz,
                            algorithm,
                        },
                    ));
                }
            }
        }
    }
    out
}

fn execution(cfg: &ScenarioConfig) -> Execution {
    if cfg.sweep.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn lead_of(trace: &KeyGenTrace, uc: &UseCaseConfig, search: &LeadSearch) -> std::result::Result<Viability, String> {
    min_lead_time(trace, uc, search).map_err(|e| e.to_string())
}

pub fn run_lead_sweep(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<LeadRow>> {
    let exec = execution(cfg);
    let traces = build_traces(cfg, seed, exec)?;
    let search = cfg.search.to_search();
    let base = cfg.use_case.to_config();
    let cells = cells(cfg);
    Ok(exec.map(&cells, |&(i, cell)| {
        let uc = cell.use_case(&base);
        let samples: Vec<_> = traces[i]
            .iter()
            .map(|t| lead_of(t, &uc, &search).map(|v| v.secs_or_inf()))
            .collect();
        LeadRow {
            cell,
            lead_s: median_cell(&samples),
        }
    }))
}

fn uptime_hours(trace: &KeyGenTrace, schedule: &ConsumptionSchedule) -> std::result::Result<f64, String> {
    match post_failure_uptime(trace, schedule).map_err(|e| e.to_string())? {
        Uptime::Finite { secs, .. } => Ok(secs / 3600.0),
        Uptime::Unbounded => Ok(f64::INFINITY),
    }
}

pub fn run_fail_sweep(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<FailRow>> {
    let exec = execution(cfg);
    let traces = build_traces(cfg, seed, exec)?;
    let search = cfg.search.to_search();
    let base = cfg.use_case.to_config();
    let switch_to = cfg.failure.switch_to;
    let jobs: Vec<(usize, Cell, f64)> = cells(cfg)
        .into_iter()
        .flat_map(|(i, c)| cfg.failure.offsets_s.iter().map(move |&o| (i, c, o)))
        .collect();
    Ok(exec.map(&jobs, |&(i, cell, offset)| {
        let uc = cell.use_case(&base);
        let mut leads = Vec::new();
        let mut uptimes = Vec::new();
        let mut switched = Vec::new();
        for t in &traces[i] {
            let lead = match lead_of(t, &uc, &search) {
                Ok(Viability::Viable(s)) => s,
                Ok(Viability::NonViable) => {
                    leads.push(Ok(f64::INFINITY));
                    uptimes.push(Ok(f64::INFINITY));
                    switched.push(Ok(f64::INFINITY));
                    continue;
                }
                Err(e) => {
                    leads.push(Err(e.clone()));
                    uptimes.push(Err(e.clone()));
                    switched.push(Err(e));
                    continue;
                }
            };
            leads.push(Ok(lead));
            let schedule = ConsumptionSchedule::for_use_case(&uc, lead).with_failure_after(offset);
            uptimes.push(uptime_hours(t, &schedule));
            if let Some(alg) = switch_to {
                let n_pf = uc.with_algorithm(alg).key_demand_per_period();
                switched.push(uptime_hours(t, &schedule.with_post_failure_demand(n_pf)));
            }
        }
        // A non-viable lead makes the uptime non-viable too; it never reads as an
        // unbounded uptime.
        let nonviable_lead = median_cell(&leads).is_nonviable();
        let gate = |c: CellValue| if nonviable_lead { CellValue::NonViable } else { c };
        FailRow {
            cell,
            fail_offset_s: offset,
            lead_s: median_cell(&leads),
            uptime_h: gate(median_cell(&uptimes)),
            switch_to,
            switch_uptime_h: switch_to.map(|_| gate(median_cell(&switched))),
        }
    }))
}

/// Minutes, for table output.
pub fn minutes(v: &CellValue) -> CellValue {
    v.clone().scaled(1.0 / 60.0)
}
