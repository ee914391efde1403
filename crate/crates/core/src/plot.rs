//! Static SVG line charts for trajectory comparisons.
//!
//! Output is a pure function of the data: fixed number formatting, no
//! timestamps, and a stride decimation that keeps every series at most
//! [`MAX_POINTS`] vertices.

use std::fmt::Write;

use crate::metrics::ComparisonReport;

pub const MAX_POINTS: usize = 1500;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#111111"];

/// One polyline of a chart.
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub label: String,
    pub x: &'a [f64],
    pub y: Vec<f64>,
}

/// Picks "nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series into a standalone SVG document.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter()).filter(finite);
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let ys = series.iter().flat_map(|s| s.y.iter()).filter(finite);
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1.0) };
    y0 -= pad;
    y1 += pad;

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title)).unwrap();
    for t in ticks(x0, x1, 8) {
        let x = px(t);
        writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, TOP + ph).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, label(t)).unwrap();
    }
    for t in ticks(y0, y1, 6) {
        let y = py(t);
        writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + pw).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t)).unwrap();
    }
    writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(x_label)).unwrap();
    writeln!(s, r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#, TOP + ph / 2.0, escape(y_label)).unwrap();

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let n = ser.x.len().min(ser.y.len());
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if n > 0 && idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        for k in idx {
            let (x, y) = (ser.x[k], ser.y[k]);
            if x.is_finite() && y.is_finite() {
                write!(pts, "{:.2},{:.2} ", px(x), py(y)).unwrap();
            }
        }
        writeln!(s, r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, escape(&ser.label), pts.trim_end()).unwrap();
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 28.0, ly + 4.0, escape(&ser.label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// One rotor-angle and one speed-deviation chart per generator, overlaying
/// every variant of the comparison and the benchmark. Returns
/// `(file name, document)` pairs.
pub fn comparison_plots(report: &ComparisonReport) -> Vec<(String, String)> {
    let Some((_, first)) = report.trajectories.first() else {
        return Vec::new();
    };
    let id = &report.contingency.id;
    let coi: Vec<Vec<Vec<f64>>> = report.trajectories.iter().map(|(_, t)| t.coi_relative()).collect();
    let mut out = Vec::new();
    for g in 0..first.n_generators() {
        let delta: Vec<Series> = report
            .trajectories
            .iter()
            .zip(&coi)
            .map(|((label, t), c)| Series { label: label.clone(), x: &t.times, y: c[g].iter().map(|v| v.to_degrees()).collect() })
            .collect();
        let title = format!("{id}: G{} rotor angle w.r.t. COI", g + 1);
        out.push((format!("delta_g{}.svg", g + 1), line_chart(&title, "t (s)", "δ − δ_COI (deg)", &delta)));
        let omega: Vec<Series> = report.trajectories.iter().map(|(label, t)| Series { label: label.clone(), x: &t.times, y: t.omega[g].clone() }).collect();
        let title = format!("{id}: G{} speed deviation", g + 1);
        out.push((format!("omega_g{}.svg", g + 1), line_chart(&title, "t (s)", "Δω (p.u.)", &omega)));
    }
    out
}
