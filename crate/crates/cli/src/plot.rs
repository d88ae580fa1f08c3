//! Dual-axis SVG training curves: loss dashed against the left axis, test
//! error solid against the right axis.

use std::fmt::Write as _;
use std::path::Path;

use resprop_core::train::{parse_metrics_csv, MetricsRow};

use crate::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// One curve set, named for the legend.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

/// Legend label: the file stem, or the parent directory for `metrics.csv`.
pub fn label_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(parent) if stem == "metrics" => parent.to_string_lossy().into_owned(),
        _ => stem,
    }
}

pub fn load_series(paths: &[impl AsRef<Path>]) -> Result<Vec<Series>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("plot needs at least one CSV".into()));
    }
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let text = std::fs::read_to_string(p)?;
            let rows = parse_metrics_csv(&text)?;
            if rows.is_empty() {
                return Err(CliError::Invalid(format!("{} has no metric rows", p.display())));
            }
            Ok(Series { label: label_for(p), rows })
        })
        .collect()
}

/// Smallest "nice" bound (1, 2 or 5 × 10^k) at or above `v`.
fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 || !v.is_finite() {
        return 1.0;
    }
    let base = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * base).find(|&b| b >= v * (1.0 - 1e-12)).unwrap_or(10.0 * base)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, dashed: bool) {
    let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
    if let [(x, y)] = pts {
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>");
        return;
    }
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>", coords.join(" "));
}

/// Renders the series; identical input gives identical bytes.
pub fn render_svg(series: &[Series]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let rows = || series.iter().flat_map(|s| s.rows.iter());
    let max_iter = nice_ceiling(rows().map(|r| r.iter as f64).fold(0.0, f64::max));
    let max_loss = nice_ceiling(rows().map(|r| r.train_loss).filter(|v| v.is_finite()).fold(0.0, f64::max));
    let max_err = nice_ceiling(rows().filter_map(|r| r.test_err).fold(0.0, f64::max));
    let sx = |it: f64| LEFT + plot_w * it / max_iter;
    let sy = |v: f64, max: f64| TOP + plot_h * (1.0 - (v / max).clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>");
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let y = TOP + plot_h * (1.0 - f);
        let x = LEFT + plot_w * f;
        let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#e0e0e0\"/>", LEFT + plot_w);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, y + 4.0, fmt_tick(max_loss * f));
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"start\">{}</text>", LEFT + plot_w + 6.0, y + 4.0, fmt_tick(max_err * f));
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", TOP + plot_h + 18.0, fmt_tick(max_iter * f));
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">iterations</text>", LEFT + plot_w / 2.0, HEIGHT - 22.0);
    let _ = writeln!(s, "<text transform=\"translate(18,{:.2}) rotate(-90)\" text-anchor=\"middle\">training loss (dashed)</text>", TOP + plot_h / 2.0);
    let _ = writeln!(s, "<text transform=\"translate({:.2},{:.2}) rotate(90)\" text-anchor=\"middle\">test error % (solid)</text>", WIDTH - 18.0, TOP + plot_h / 2.0);

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let loss: Vec<(f64, f64)> = ser.rows.iter().filter(|r| r.train_loss.is_finite()).map(|r| (sx(r.iter as f64), sy(r.train_loss, max_loss))).collect();
        let err: Vec<(f64, f64)> = ser.rows.iter().filter_map(|r| r.test_err.map(|e| (sx(r.iter as f64), sy(e, max_err)))).collect();
        let _ = writeln!(s, "<g class=\"series\" data-label=\"{}\">", escape(&ser.label));
        if !loss.is_empty() {
            polyline(&mut s, &loss, color, true);
        }
        if !err.is_empty() {
            polyline(&mut s, &err, color, false);
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + plot_w - 160.0;
        let _ = writeln!(s, "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>", ly - 4.0, lx + 20.0, ly - 4.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>", lx + 26.0, escape(&ser.label));
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        let t = format!("{v:.3}");
        t.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Reads `paths` and writes the SVG to `out`.
pub fn plot(paths: &[impl AsRef<Path>], out: &Path) -> Result<(), CliError> {
    let series = load_series(paths)?;
    std::fs::write(out, render_svg(&series))?;
    Ok(())
}
