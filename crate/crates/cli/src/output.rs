//! CSV tables and SVG figures. File names are fixed so repeated runs overwrite in place.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use qkdlink_core::comm::tight_availability;
use qkdlink_core::{ChannelModel, PoolTimeline, UseCaseConfig};

use crate::error::{CliError, Result};
use crate::sweep::{minutes, Cell, CellValue, FailRow, LeadRow};

pub const MODEL_CSV: &str = "model.csv";
pub const MODEL_SVG: &str = "model.svg";
pub const LEAD_CELLS_CSV: &str = "lead_cells.csv";
pub const LEAD_TABLE_CSV: &str = "lead_table.csv";
pub const LEAD_SVG: &str = "lead_vs_distance.svg";
pub const FEASIBILITY_CSV: &str = "feasibility.csv";
pub const FAIL_CELLS_CSV: &str = "fail_cells.csv";
pub const FAIL_TABLE_CSV: &str = "fail_table.csv";
pub const FAIL_SVG: &str = "uptime_bars.svg";
pub const POOL_CSV: &str = "pool_timeline.csv";
pub const POOL_SVG: &str = "pool_timeline.svg";
pub const RUN_CSV: &str = "run.csv";
pub const RUN_SUMMARY: &str = "run_summary.txt";

fn plot_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Output(format!("plot: {e:?}"))
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn km(v: f64) -> String {
    format!("{v}")
}

// Palette with enough distinct entries for the default grid.
const COLORS: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn series_label(c: &Cell) -> String {
    format!("{} N={} fs={}Hz", c.algorithm.name(), c.n_signals, c.sampling_rate_hz)
}

/// Distinct series keys in first-seen order.
fn series_keys(cells: impl Iterator<Item = Cell>) -> Vec<Cell> {
    let mut keys: Vec<Cell> = Vec::new();
    for c in cells {
        if !keys.iter().any(|k| same_series(k, &c)) {
            keys.push(c);
        }
    }
    keys
}

fn same_series(a: &Cell, b: &Cell) -> bool {
    a.algorithm == b.algorithm && a.n_signals == b.n_signals && a.sampling_rate_hz == b.sampling_rate_hz
}

pub fn write_model(dir: &Path, model: &ChannelModel, distances: &[f64]) -> Result<Vec<PathBuf>> {
    let mut w = writer(dir, MODEL_CSV)?;
    w.write_record(["distance_km", "transmissivity", "qber", "secret_fraction", "skr_bps", "startup_delay_s"])?;
    let rows: Vec<(f64, ChannelModel)> = distances.iter().map(|&d| (d, model.with_length(d))).collect();
    for (d, m) in &rows {
        w.write_record([
            km(*d),
            format!("{:.6e}", m.transmissivity()),
            format!("{:.6}", m.qber()),
            format!("{:.6}", m.secret_fraction()),
            format!("{:.3}", m.secret_key_rate()),
            m.startup_delay_s().map_or_else(|| "-".into(), |s| format!("{s:.1}")),
        ])?;
    }
    w.flush()?;
    let mut files = vec![dir.join(MODEL_CSV)];
    if rows.is_empty() {
        return Ok(files);
    }
    let path = dir.join(MODEL_SVG);
    {
        let root = SVGBackend::new(&path, (1000, 450)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (left, right) = root.split_horizontally(500);
        let x0 = distances[0];
        let x1 = distances[distances.len() - 1].max(x0 + 1.0);
        let skr_max = rows.iter().map(|(_, m)| m.secret_key_rate()).fold(1.0, f64::max) / 1e3;
        let mut c = ChartBuilder::on(&left)
            .caption("Secret key rate", ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(55)
            .build_cartesian_2d(x0..x1, 0.0..skr_max * 1.05)
            .map_err(plot_err)?;
        c.configure_mesh().x_desc("distance (km)").y_desc("SKR (kbps)").draw().map_err(plot_err)?;
        c.draw_series(LineSeries::new(rows.iter().map(|(d, m)| (*d, m.secret_key_rate() / 1e3)), &COLORS[0]))
            .map_err(plot_err)?;
        let q_max = rows.iter().map(|(_, m)| m.qber()).fold(0.01, f64::max) * 100.0;
        let mut c = ChartBuilder::on(&right)
            .caption("QBER", ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(55)
            .build_cartesian_2d(x0..x1, 0.0..q_max * 1.1)
            .map_err(plot_err)?;
        c.configure_mesh().x_desc("distance (km)").y_desc("QBER (%)").draw().map_err(plot_err)?;
        c.draw_series(LineSeries::new(rows.iter().map(|(d, m)| (*d, m.qber() * 100.0)), &COLORS[3]))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    files.push(path);
    Ok(files)
}

pub fn write_lead(dir: &Path, rows: &[LeadRow]) -> Result<Vec<PathBuf>> {
    let mut w = writer(dir, LEAD_CELLS_CSV)?;
    w.write_record(["distance_km", "algorithm", "n_signals", "sampling_rate_hz", "lead_min"])?;
    for r in rows {
        w.write_record([
            km(r.cell.distance_km),
            r.cell.algorithm.name().into(),
            r.cell.n_signals.to_string(),
            r.cell.sampling_rate_hz.to_string(),
            minutes(&r.lead_s).render(2),
        ])?;
    }
    w.flush()?;

    let keys = series_keys(rows.iter().map(|r| r.cell));
    let mut w = writer(dir, LEAD_TABLE_CSV)?;
    let mut header = vec!["distance_km".to_string()];
    header.extend(keys.iter().map(series_label));
    w.write_record(&header)?;
    for d in distances(rows.iter().map(|r| r.cell.distance_km)) {
        let mut rec = vec![km(d)];
        for k in &keys {
            let v = rows
                .iter()
                .find(|r| r.cell.distance_km == d && same_series(&r.cell, k))
                .map_or_else(String::new, |r| minutes(&r.lead_s).render(1));
            rec.push(v);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut files = vec![dir.join(LEAD_CELLS_CSV), dir.join(LEAD_TABLE_CSV)];
    if rows.is_empty() {
        return Ok(files);
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = keys
        .iter()
        .map(|k| {
            let pts = rows
                .iter()
                .filter(|r| same_series(&r.cell, k))
                .filter_map(|r| minutes(&r.lead_s).value().map(|m| (r.cell.distance_km, m)))
                .collect();
            (series_label(k), pts)
        })
        .collect();
    let path = dir.join(LEAD_SVG);
    line_plot(&path, "Minimum lead time", "distance (km)", "lead (min)", &series)?;
    files.push(path);
    Ok(files)
}

fn distances(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    for d in it {
        if !v.contains(&d) {
            v.push(d);
        }
    }
    v
}

fn line_plot(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (x0, x1) = bounds(all.iter().map(|p| p.0));
    let (_, y1) = bounds(all.iter().map(|p| p.1));
    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut c = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, 0.0..y1 * 1.08)
        .map_err(plot_err)?;
    c.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw().map_err(plot_err)?;
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        c.draw_series(LineSeries::new(pts.iter().copied(), &color))
            .map_err(plot_err)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        c.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    c.configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperLeft)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn opt(v: &Option<CellValue>, decimals: usize) -> String {
    v.as_ref().map_or_else(String::new, |c| c.render(decimals))
}

pub fn write_fail(dir: &Path, rows: &[FailRow]) -> Result<Vec<PathBuf>> {
    let mut w = writer(dir, FAIL_CELLS_CSV)?;
    w.write_record([
        "distance_km",
        "algorithm",
        "n_signals",
        "sampling_rate_hz",
        "fail_offset_s",
        "lead_min",
        "uptime_h",
        "switch_to",
        "switch_uptime_h",
    ])?;
    for r in rows {
        w.write_record([
            km(r.cell.distance_km),
            r.cell.algorithm.name().into(),
            r.cell.n_signals.to_string(),
            r.cell.sampling_rate_hz.to_string(),
            r.fail_offset_s.to_string(),
            minutes(&r.lead_s).render(2),
            r.uptime_h.render(4),
            r.switch_to.map_or_else(String::new, |a| a.name().into()),
            opt(&r.switch_uptime_h, 4),
        ])?;
    }
    w.flush()?;

    let first_offset = rows.first().map(|r| r.fail_offset_s);
    let table: Vec<&FailRow> = rows.iter().filter(|r| Some(r.fail_offset_s) == first_offset).collect();
    let keys = series_keys(table.iter().map(|r| r.cell));
    let mut w = writer(dir, FAIL_TABLE_CSV)?;
    let mut header = vec!["distance_km".to_string()];
    for k in &keys {
        header.push(series_label(k));
        if let Some(a) = table.first().and_then(|r| r.switch_to) {
            header.push(format!("{} -> {}", series_label(k), a.name()));
        }
    }
    w.write_record(&header)?;
    for d in distances(table.iter().map(|r| r.cell.distance_km)) {
        let mut rec = vec![km(d)];
        for k in &keys {
            let row = table.iter().find(|r| r.cell.distance_km == d && same_series(&r.cell, k));
            rec.push(row.map_or_else(String::new, |r| r.uptime_h.render(4)));
            if table.first().and_then(|r| r.switch_to).is_some() {
                rec.push(row.map_or_else(String::new, |r| opt(&r.switch_uptime_h, 4)));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut files = vec![dir.join(FAIL_CELLS_CSV), dir.join(FAIL_TABLE_CSV)];
    if table.is_empty() {
        return Ok(files);
    }
    let path = dir.join(FAIL_SVG);
    bar_plot(&path, &table, &keys)?;
    files.push(path);
    Ok(files)
}

fn bar_plot(path: &Path, rows: &[&FailRow], keys: &[Cell]) -> Result<()> {
    let ds = distances(rows.iter().map(|r| r.cell.distance_km));
    let y1 = rows.iter().filter_map(|r| r.uptime_h.value()).fold(1.0, f64::max);
    let root = SVGBackend::new(path, (1100, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut c = ChartBuilder::on(&root)
        .caption("Post-failure uptime", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..ds.len() as f64, 0.0..y1 * 1.08)
        .map_err(plot_err)?;
    let labels = ds.clone();
    c.configure_mesh()
        .x_desc("distance (km)")
        .y_desc("uptime (h)")
        .x_labels(ds.len().min(25))
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            labels.get(i).map_or_else(String::new, |d| format!("{d}"))
        })
        .draw()
        .map_err(plot_err)?;
    let width = 0.8 / keys.len().max(1) as f64;
    for (j, k) in keys.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        let bars: Vec<_> = rows
            .iter()
            .filter(|r| same_series(&r.cell, k))
            .filter_map(|r| {
                let i = ds.iter().position(|&d| d == r.cell.distance_km)? as f64;
                let h = r.uptime_h.value()?;
                let x = i + 0.1 + j as f64 * width;
                Some(Rectangle::new([(x, 0.0), (x + width, h)], color.filled()))
            })
            .collect();
        c.draw_series(bars)
            .map_err(plot_err)?
            .label(series_label(k))
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    c.configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

pub fn write_pool(dir: &Path, timeline: &PoolTimeline) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(POOL_CSV);
    timeline.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    let mut files = vec![csv_path];
    if timeline.entries.is_empty() {
        return Ok(files);
    }
    let path = dir.join(POOL_SVG);
    {
        let step_h = timeline.step_s() / 3600.0;
        // Thin the series to keep the SVG small.
        let stride = (timeline.entries.len() / 4000).max(1);
        let pts: Vec<(f64, f64)> = timeline
            .entries
            .iter()
            .step_by(stride)
            .map(|e| (e.k as f64 * step_h, e.d_bits as f64 / 1e6))
            .collect();
        let (x0, x1) = bounds(pts.iter().map(|p| p.0));
        let (ylo, yhi) = bounds(pts.iter().map(|p| p.1));
        let (ylo, yhi) = (ylo.min(0.0), yhi.max(0.0));
        let pad = (yhi - ylo) * 0.06;
        let root = SVGBackend::new(&path, (1000, 560)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut c = ChartBuilder::on(&root)
            .caption("Dynamic key pool", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, (ylo - pad)..(yhi + pad))
            .map_err(plot_err)?;
        c.configure_mesh().x_desc("time (h)").y_desc("pool (Mbit)").draw().map_err(plot_err)?;
        c.draw_series(LineSeries::new(pts, &COLORS[0])).map_err(plot_err)?;
        let mut markers = vec![("lead", timeline.k_lead, COLORS[2])];
        if let Some(f) = timeline.k_fail {
            markers.push(("fail", f, COLORS[3]));
        }
        if let Some(x) = timeline.k_exhaust {
            markers.push(("exhaust", x, COLORS[4]));
        }
        for (label, k, color) in markers {
            let x = k as f64 * step_h;
            c.draw_series(LineSeries::new(vec![(x, ylo - pad), (x, yhi + pad)], color.stroke_width(2)))
                .map_err(plot_err)?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        c.configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    files.push(path);
    Ok(files)
}

/// Average-rate feasibility of every sweep cell against the model's mean key rate.
pub fn write_feasibility(dir: &Path, model: &ChannelModel, base: &UseCaseConfig, cells: &[Cell]) -> Result<PathBuf> {
    let mut w = writer(dir, FEASIBILITY_CSV)?;
    w.write_record(["distance_km", "algorithm", "n_signals", "sampling_rate_hz", "skr_bps", "demand_bps", "feasible"])?;
    for c in cells {
        let uc = c.use_case(base);
        let skr = model.with_length(c.distance_km).secret_key_rate();
        w.write_record([
            km(c.distance_km),
            c.algorithm.name().into(),
            c.n_signals.to_string(),
            c.sampling_rate_hz.to_string(),
            format!("{skr:.3}"),
            format!("{:.3}", uc.demand_rate_bps()),
            tight_availability(&uc, skr).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(dir.join(FEASIBILITY_CSV))
}
