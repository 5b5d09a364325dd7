use std::path::Path;
use std::process::Command;

use qkdlink_cli::config::ScenarioConfig;
use qkdlink_cli::output::{self, FAIL_SVG, LEAD_CELLS_CSV, LEAD_SVG, LEAD_TABLE_CSV, POOL_SVG};
use qkdlink_cli::{commands, run_lead_sweep, CellValue, OUT_ENV};
use qkdlink_core::pool::min_lead_time;
use qkdlink_core::Viability;

fn cfg(text: &str, out: &Path) -> ScenarioConfig {
    let mut c = ScenarioConfig::from_toml(text, Path::new(".")).unwrap();
    c.run.out = out.to_path_buf();
    c
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qkdlink"))
}

#[test]
fn empty_results_give_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let files = output::write_lead(dir.path(), &[]).unwrap();
    assert_eq!(files.len(), 2);
    let text = std::fs::read_to_string(dir.path().join(LEAD_CELLS_CSV)).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(!dir.path().join(LEAD_SVG).exists());
    output::write_fail(dir.path(), &[]).unwrap();
    assert!(!dir.path().join(FAIL_SVG).exists());
}

#[test]
fn single_cell_grid_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("[sweep]\ndistances_km = [70]\nn_signals = [68]\nsampling_rates_hz = [1.0]\n", dir.path());
    let (rows, _) = commands::lead(&c, 1).unwrap();
    assert_eq!(rows.len(), 1);
    let table = std::fs::read_to_string(dir.path().join(LEAD_TABLE_CSV)).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.starts_with("distance_km,otp N=68 fs=1Hz\n70,"));
}

#[test]
fn otp_2000_at_10_hz_is_never_viable() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("[sweep]\nn_signals = [2000]\nsampling_rates_hz = [10.0]\n", dir.path());
    let rows = run_lead_sweep(&c, 1).unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.lead_s == CellValue::NonViable), "{rows:?}");
}

#[test]
fn nonviable_cells_are_exactly_the_nonviable_searches() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("[sweep]\nn_signals = [68, 2000]\nsampling_rates_hz = [1.0, 20.0]\n", dir.path());
    let rows = run_lead_sweep(&c, 3).unwrap();
    let distances = c.distances();
    for r in &rows {
        let i = distances.iter().position(|&d| d == r.cell.distance_km).unwrap();
        let trace = c.trace(r.cell.distance_km, qkdlink_cli::sweep::replicate_seed(3, i, 0)).unwrap();
        let direct = min_lead_time(&trace, &r.cell.use_case(&c.use_case.to_config()), &c.search.to_search()).unwrap();
        assert_eq!(r.lead_s.is_nonviable(), direct == Viability::NonViable, "{:?}", r.cell);
    }
}

#[test]
fn short_trace_marks_cells_as_errors_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(
        "[channel]\ntrace_duration_s = 3000.0\n[sweep]\ndistances_km = [50, 140]\nn_signals = [68]\nsampling_rates_hz = [1.0]\n",
        dir.path(),
    );
    let (rows, _) = commands::lead(&c, 1).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| matches!(r.lead_s, CellValue::Error(_))), "{rows:?}");
    let cells = std::fs::read_to_string(dir.path().join(LEAD_CELLS_CSV)).unwrap();
    assert_eq!(cells.matches(",error").count(), 2);
}

#[test]
fn pool_plot_carries_all_markers() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(
        "[channel]\nlength_km = 135.0\n[pool]\nhorizon_s = 14400.0\nfail_after_s = 1800.0\n",
        dir.path(),
    );
    let (tl, _) = commands::pool(&c, 1).unwrap();
    assert!(tl.k_exhaust.is_some());
    let svg = std::fs::read_to_string(dir.path().join(POOL_SVG)).unwrap();
    for label in ["lead", "fail", "exhaust"] {
        assert!(svg.contains(&format!(">\n{label}\n<")) || svg.contains(&format!(">{label}<")), "{label}");
    }
}

#[test]
fn lead_plot_has_one_curve_per_signal_count() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("[sweep]\nn_signals = [68, 2000]\nsampling_rates_hz = [1.0]\n", dir.path());
    commands::lead(&c, 1).unwrap();
    let svg = std::fs::read_to_string(dir.path().join(LEAD_SVG)).unwrap();
    assert!(svg.contains("otp N=68 fs=1Hz") && svg.contains("otp N=2000 fs=1Hz"));
}

#[test]
fn model_verb_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().args(["model", "--out"]).arg(dir.path()).status().unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(dir.path().join("model.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    assert!(csv.starts_with("distance_km,transmissivity,qber,secret_fraction,skr_bps,startup_delay_s\n"));
    assert!(dir.path().join("model.svg").exists());
}

#[test]
fn env_var_sets_output_dir_and_flag_wins() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let st = bin().arg("model").env(OUT_ENV, env_dir.path()).status().unwrap();
    assert!(st.success());
    assert!(env_dir.path().join("model.csv").exists());
    let st = bin().args(["model", "--out"]).arg(flag_dir.path()).env(OUT_ENV, env_dir.path()).status().unwrap();
    assert!(st.success());
    assert!(flag_dir.path().join("model.csv").exists());
}

#[test]
fn binary_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("s.toml");
    std::fs::write(
        &conf,
        "[sweep]\ndistances_km = [50, 90, 135, 140]\nn_signals = [68, 2000]\nsampling_rates_hz = [1.0]\nreplicates = 3\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for verb in ["lead", "fail"] {
            let st = bin().args([verb, "--seed", "11", "--config"]).arg(&conf).arg("--out").arg(&out).status().unwrap();
            assert!(st.success());
        }
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 5);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[sweep]\nn_signals = [68]\nsampling_rates_hz = [1.0]\nreplicates = 2\nparallel = ";
    let p = run_lead_sweep(&cfg(&format!("{text}true\n"), dir.path()), 5).unwrap();
    let s = run_lead_sweep(&cfg(&format!("{text}false\n"), dir.path()), 5).unwrap();
    assert_eq!(p, s);
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.toml");
    for text in [
        "[sweep]\ndistances_km = [90, 50]\n",
        "[sweep]\nn_signals = []\n",
        "[channel]\ntrace = \"missing.csv\"\n",
        "[sweep]\nbogus = 1\n",
    ] {
        std::fs::write(&conf, text).unwrap();
        let out = bin().args(["lead", "--config"]).arg(&conf).output().unwrap();
        assert!(!out.status.success(), "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config"), "{text}");
    }
}

#[test]
fn measured_trace_drives_a_single_distance() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t_s,skr_bps,qber\n");
    for i in 1..=400 {
        csv.push_str(&format!("{},{},0.03\n", i * 120, 20_000));
    }
    std::fs::write(dir.path().join("trace.csv"), csv).unwrap();
    let text = "[channel]\nlength_km = 60.0\ntrace = \"trace.csv\"\n[sweep]\nn_signals = [68]\nsampling_rates_hz = [1.0]\n";
    let mut c = ScenarioConfig::from_toml(text, dir.path()).unwrap();
    c.run.out = dir.path().join("out");
    let (rows, _) = commands::lead(&c, 1).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].cell.distance_km, 60.0);
    // The first cycle ends at 120 s and covers the 2176 b/s demand with room to spare.
    assert_eq!(rows[0].lead_s, CellValue::Value(120.0));
}

#[test]
fn live_run_over_http_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["run", "--http", "--cycles", "20", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(std::fs::read_to_string(dir.path().join("run_summary.txt")).unwrap().contains("cycles delivered 20 of 20"));
}
