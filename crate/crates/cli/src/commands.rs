//! One function per CLI verb. Each writes its files under `cfg.run.out` and returns
//! the paths it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use qkdlink_core::pool::{min_lead_time, simulate_pool};
use qkdlink_core::time::secs_to_nanos;
use qkdlink_core::{ConsumptionSchedule, KeyGenTrace, PoolTimeline, Viability};
use qkdlink_harness::{run_loop, ExhaustPolicy, FeedPlan, KmsEndpoints, RunConfig, RunReport};
use qkdlink_kms::http::{spawn, HttpConfig};
use qkdlink_kms::{KmsPair, Role, ServerConfig};

use crate::config::{Policy, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::output;
use crate::sweep::{run_fail_sweep, run_lead_sweep, FailRow, LeadRow};

pub fn model(cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    let m = cfg.model(cfg.channel.length_km)?;
    output::write_model(&cfg.run.out, &m, &cfg.sweep.distances_km)
}

pub fn lead(cfg: &ScenarioConfig, seed: u64) -> Result<(Vec<LeadRow>, Vec<PathBuf>)> {
    let rows = run_lead_sweep(cfg, seed)?;
    let mut files = output::write_lead(&cfg.run.out, &rows)?;
    let cells: Vec<_> = rows.iter().map(|r| r.cell).collect();
    let m = cfg.model(cfg.channel.length_km)?;
    files.push(output::write_feasibility(&cfg.run.out, &m, &cfg.use_case.to_config(), &cells)?);
    Ok((rows, files))
}

pub fn fail(cfg: &ScenarioConfig, seed: u64) -> Result<(Vec<FailRow>, Vec<PathBuf>)> {
    let rows = run_fail_sweep(cfg, seed)?;
    let files = output::write_fail(&cfg.run.out, &rows)?;
    Ok((rows, files))
}

fn resolve_lead(trace: &KeyGenTrace, cfg: &ScenarioConfig, fixed: Option<f64>) -> Result<f64> {
    if let Some(l) = fixed {
        return Ok(l);
    }
    match min_lead_time(trace, &cfg.use_case.to_config(), &cfg.search.to_search())? {
        Viability::Viable(s) => Ok(s),
        Viability::NonViable => Err(CliError::Config(format!(
            "no lead time up to {} s sustains this use case at {} km",
            cfg.search.cap_s, cfg.channel.length_km
        ))),
    }
}

/// Pool timeline at `channel.length_km`, from step 0 to lead + horizon.
pub fn pool(cfg: &ScenarioConfig, seed: u64) -> Result<(PoolTimeline, Vec<PathBuf>)> {
    let trace = cfg.trace(cfg.channel.length_km, seed)?;
    let uc = cfg.use_case.to_config();
    let lead_s = resolve_lead(&trace, cfg, cfg.pool.lead_s)?;
    let mut schedule = ConsumptionSchedule::for_use_case(&uc, lead_s);
    if let Some(off) = cfg.pool.fail_after_s {
        schedule = schedule.with_failure_after(off);
    }
    if let Some(alg) = cfg.pool.switch_to {
        schedule = schedule.with_post_failure_demand(uc.with_algorithm(alg).key_demand_per_period());
    }
    let horizon_steps = schedule.lead_steps + secs_to_nanos(cfg.pool.horizon_s).div_ceil(schedule.step_ns);
    let timeline = simulate_pool(&trace, &schedule, horizon_steps)?;
    let files = output::write_pool(&cfg.run.out, &timeline)?;
    Ok((timeline, files))
}

/// Synthetic traces are lengthened to cover the lead search plus the whole run.
fn run_trace(cfg: &ScenarioConfig, seed: u64) -> Result<KeyGenTrace> {
    if cfg.trace_path().is_some() {
        return cfg.trace(cfg.channel.length_km, seed);
    }
    let uc = cfg.use_case.to_config();
    let run_s = cfg.run.cycles as f64 * uc.effective_period_s();
    let lead_s = cfg.run.lead_s.unwrap_or(cfg.search.cap_s + cfg.search.horizon_s);
    let mut c = cfg.clone();
    c.channel.trace_duration_s = c.channel.trace_duration_s.max(lead_s + run_s + 2.0 * c.channel.cycle_period_s);
    c.trace(c.channel.length_km, seed)
}

/// Live loop against an in-process key-server pair or two HTTP servers.
pub fn run(cfg: &ScenarioConfig, seed: u64) -> Result<(RunReport, Vec<PathBuf>)> {
    let trace = run_trace(cfg, seed)?;
    let uc = cfg.use_case.to_config();
    let lead_s = resolve_lead(&trace, cfg, cfg.run.lead_s)?;
    let mut plan = FeedPlan::new(trace, &uc, lead_s);
    if let Some(c) = cfg.run.fail_before_cycle {
        plan = plan.fail_before_cycle(c);
    }
    let mut rc = RunConfig::new(uc, cfg.run.cycles, seed);
    rc.feed = Some(plan);
    rc.switch_on_failure = cfg.run.switch_to;
    rc.realtime = cfg.run.realtime;
    rc.policy = match cfg.run.policy {
        Policy::Halt => ExhaustPolicy::Halt,
        Policy::Skip => ExhaustPolicy::Skip,
    };
    rc.validate()?;

    let report = if cfg.run.http {
        let b = spawn(HttpConfig::new(ServerConfig::new(Role::B, seed)))?;
        let a = spawn(HttpConfig::new(ServerConfig::new(Role::A, seed)).peer(b.url()))?;
        let kms = KmsEndpoints::http(&a.url(), &b.url())?;
        let r = run_loop(&rc, &kms);
        a.shutdown();
        b.shutdown();
        r?
    } else {
        run_loop(&rc, &KmsEndpoints::in_process(Arc::new(KmsPair::new(seed))))?
    };

    let dir = &cfg.run.out;
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(output::RUN_CSV);
    report.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    let summary_path = dir.join(output::RUN_SUMMARY);
    let mut f = File::create(&summary_path)?;
    writeln!(f, "{}", report.summary())?;
    Ok((report, vec![csv_path, summary_path]))
}
