//! Layerwise Wd line charts as plain SVG 1.1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::report::{CsvRow, CSV_HEADER};
use crate::error::Result;
use crate::pruning::Method;
use crate::treatments::Treatment;

/// Plotted treatments with their line colors.
pub const SERIES: [(Treatment, &str); 3] = [
    (Treatment::Reinit, "blue"),
    (Treatment::LayerwiseShuffle, "green"),
    (Treatment::RandomPruning, "red"),
];

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 240.0;
const LEFT: f64 = 55.0;
const RIGHT: f64 = 15.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;
const LEGEND_H: f64 = 30.0;

#[derive(Debug, Default)]
pub struct PlotOutcome {
    pub files: Vec<PathBuf>,
    /// Rows (or a header) that could not be used.
    pub warnings: usize,
}

/// sparsity ppm → treatment → layer → Wd values over seeds.
type Panels = BTreeMap<u32, BTreeMap<Treatment, BTreeMap<usize, Vec<f64>>>>;

/// Reads a sweep CSV leniently, skipping rows that do not parse.
pub fn read_rows_lenient(csv_path: impl AsRef<Path>) -> Result<(Vec<CsvRow>, usize)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(csv_path)?;
    let header_ok = match reader.headers() {
        Ok(h) => h.iter().collect::<Vec<_>>().join(",") == CSV_HEADER,
        Err(_) => false,
    };
    if !header_ok {
        log::warn!("CSV header does not match the sweep schema");
        return Ok((Vec::new(), 1));
    }
    let (mut rows, mut warnings) = (Vec::new(), 0);
    for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => {
                log::warn!("skipping CSV row {}: {e}", i + 2);
                warnings += 1;
            }
        }
    }
    Ok((rows, warnings))
}

/// Writes one SVG per `(network, method)` found in the CSV into `out_dir`.
pub fn emit_plots(csv_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<PlotOutcome> {
    let (rows, mut warnings) = read_rows_lenient(csv_path)?;
    let mut groups: BTreeMap<(String, Method), Panels> = BTreeMap::new();
    for r in &rows {
        let (Some(layer), Some(wd)) = (r.layer_index(), r.wd) else {
            continue;
        };
        if !r.error.is_empty() || !SERIES.iter().any(|(t, _)| *t == r.treatment) {
            continue;
        }
        if !wd.is_finite() || wd < 0.0 {
            warnings += 1;
            continue;
        }
        groups
            .entry((r.network.clone(), r.method))
            .or_default()
            .entry(crate::analysis::RunKey::sparsity_to_ppm(r.sparsity))
            .or_default()
            .entry(r.treatment)
            .or_default()
            .entry(layer)
            .or_default()
            .push(wd);
    }
    if groups.is_empty() {
        return Ok(PlotOutcome { files: Vec::new(), warnings: warnings.max(usize::from(rows.is_empty())) });
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for ((network, method), panels) in &groups {
        let path = out_dir.join(format!("{network}_{method}.svg"));
        fs::write(&path, render(network, *method, panels))?;
        files.push(path);
    }
    Ok(PlotOutcome { files, warnings })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(network: &str, method: Method, panels: &Panels) -> String {
    let width = PANEL_W * panels.len() as f64;
    let height = PANEL_H + LEGEND_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>Layerwise Wd, {} / {}</title>", escape(network), method);
    for (p, (ppm, series)) in panels.iter().enumerate() {
        render_panel(&mut s, p as f64 * PANEL_W, *ppm, series);
    }
    let ly = PANEL_H + LEGEND_H / 2.0;
    for (k, (t, color)) in SERIES.iter().enumerate() {
        let x = 20.0 + 150.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{x}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">Wd({t}, unmodified)</text></g>"#,
            x + 20.0,
            x + 25.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, x0: f64, ppm: u32, series: &BTreeMap<Treatment, BTreeMap<usize, Vec<f64>>>) {
    let layers: Vec<usize> = {
        let mut l: Vec<usize> = series.values().flat_map(|m| m.keys().copied()).collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    let means: BTreeMap<Treatment, Vec<(usize, f64)>> = series
        .iter()
        .map(|(t, by_layer)| {
            let pts = by_layer.iter().map(|(&l, v)| (l, v.iter().sum::<f64>() / v.len() as f64)).collect();
            (*t, pts)
        })
        .collect();
    let y_max = means.values().flatten().map(|p| p.1).fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let (plot_w, plot_h) = (PANEL_W - LEFT - RIGHT, PANEL_H - TOP - BOTTOM);
    let (ox, oy) = (x0 + LEFT, TOP + plot_h);
    let x_of = |layer: usize| {
        let pos = layers.iter().position(|&l| l == layer).unwrap_or(0) as f64;
        if layers.len() > 1 {
            ox + plot_w * pos / (layers.len() - 1) as f64
        } else {
            ox + plot_w / 2.0
        }
    };
    let y_of = |v: f64| oy - plot_h * v / y_max;

    let _ = writeln!(s, r#"<g class="panel" data-sparsity="{}">"#, f64::from(ppm) / 1e6);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">sparsity {}</text>"#,
        ox + plot_w / 2.0,
        TOP - 10.0,
        f64::from(ppm) / 1e6
    );
    let _ = writeln!(s, r#"<line class="axis" x1="{ox}" y1="{oy}" x2="{}" y2="{oy}" stroke="black"/>"#, ox + plot_w);
    let _ = writeln!(s, r#"<line class="axis" x1="{ox}" y1="{oy}" x2="{ox}" y2="{TOP}" stroke="black"/>"#);
    for &l in &layers {
        let x = x_of(l);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{l}</text>"#, oy + 14.0);
    }
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, ox - 4.0, y_of(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">layer</text>"#, ox + plot_w / 2.0, oy + 30.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">Wd</text>"#,
        x0 + 14.0,
        TOP + plot_h / 2.0,
        x0 + 14.0,
        TOP + plot_h / 2.0
    );
    for (t, color) in SERIES {
        let Some(pts) = means.get(&t) else { continue };
        let points: Vec<String> = pts.iter().map(|&(l, v)| format!("{:.2},{:.2}", x_of(l), y_of(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{t}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
    }
    s.push_str("</g>\n");
}
