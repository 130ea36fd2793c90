//! SVG line charts of `F̂` against `log10(t)`.
//!
//! `t = 0` has no logarithm; it is drawn at the left edge of the plot area,
//! separated from `t = 1` by a small gap. Series with different `λ` go to
//! separate panels, laid out left to right.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::metrics::{read_metrics, MetricsFile};

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 340.0;
const MARGIN_L: f64 = 84.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
/// Fraction of the plot width between the pinned `t = 0` and `t = 1`.
const PIN_GAP: f64 = 0.1;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One curve: evaluated `(t, F̂)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub lambda: Option<f64>,
    pub points: Vec<(u64, f64)>,
}

impl Series {
    pub fn from_metrics(label: &str, file: &MetricsFile) -> Self {
        Self {
            label: file.get("label").unwrap_or(label).to_string(),
            lambda: file.lambda(),
            points: file
                .records
                .iter()
                .filter_map(|r| r.cost_unreg.map(|c| (r.t, c)))
                .collect(),
        }
    }
}

/// Reads metrics files and writes one SVG with a series per file.
pub fn emit_plot(metric_files: &[&Path], output: &Path) -> Result<()> {
    if metric_files.is_empty() {
        return Err(Error::Config("plot needs at least one metrics file".into()));
    }
    let mut series = Vec::with_capacity(metric_files.len());
    for path in metric_files {
        let file = read_metrics(path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        series.push(Series::from_metrics(&stem, &file));
    }
    write_svg(&series, output)
}

pub fn write_svg(series: &[Series], output: &Path) -> Result<()> {
    let svg = render_svg(series)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(output, svg)?;
    Ok(())
}

/// Groups series by `λ` in order of first appearance.
fn panels(series: &[Series]) -> Vec<(Option<f64>, Vec<usize>)> {
    let mut out: Vec<(Option<f64>, Vec<usize>)> = Vec::new();
    for (i, s) in series.iter().enumerate() {
        match out.iter_mut().find(|(l, _)| *l == s.lambda) {
            Some((_, members)) => members.push(i),
            None => out.push((s.lambda, vec![i])),
        }
    }
    out
}

pub fn render_svg(series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(Error::Config(format!(
                "series `{}` has no evaluated cost values",
                s.label
            )));
        }
        if s.points.iter().any(|&(_, c)| !c.is_finite()) {
            return Err(Error::Config(format!(
                "series `{}` has non-finite cost values",
                s.label
            )));
        }
    }
    let groups = panels(series);
    let width = PANEL_W * groups.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{PANEL_H}" fill="white"/>"#);
    for (p, (lambda, members)) in groups.iter().enumerate() {
        render_panel(&mut svg, p as f64 * PANEL_W, *lambda, members, series);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn render_panel(svg: &mut String, x_off: f64, lambda: Option<f64>, members: &[usize], series: &[Series]) {
    let left = x_off + MARGIN_L;
    let right = x_off + PANEL_W - MARGIN_R;
    let top = MARGIN_T;
    let bottom = PANEL_H - MARGIN_B;
    let plot_w = right - left;

    let t_max = members
        .iter()
        .flat_map(|&i| series[i].points.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(10);
    let decades = (t_max as f64).log10();
    let x_of = |t: u64| -> f64 {
        if t == 0 {
            left
        } else {
            left + plot_w * (PIN_GAP + (1.0 - PIN_GAP) * (t as f64).log10() / decades)
        }
    };

    let costs = members.iter().flat_map(|&i| series[i].points.iter().map(|p| p.1));
    let (lo, hi) = costs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        0.05 * hi.abs().max(1e-12)
    };
    let (y_lo, y_hi) = (lo - pad, hi + pad);
    let y_of = |c: f64| bottom - (c - y_lo) / (y_hi - y_lo) * (bottom - top);

    let title = match lambda {
        Some(l) => format!("λ = {l:e}"),
        None => "F̂ vs log10(t)".to_string(),
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        (left + right) / 2.0,
        top - 14.0,
        escape(&title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{plot_w:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        bottom - top
    );

    // x ticks: pinned t = 0, then whole decades.
    let mut ticks = vec![(0u64, "0".to_string())];
    let mut d = 0u32;
    while (d as f64) <= decades + 1e-12 {
        ticks.push((10u64.pow(d), d.to_string()));
        d += 1;
    }
    for (t, label) in ticks {
        let x = x_of(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 4.0,
            bottom + 16.0,
            if t == 0 { "t=0".to_string() } else { label }
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log10(t)</text>"#,
        (left + right) / 2.0,
        bottom + 34.0
    );

    for i in 0..5 {
        let c = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = y_of(c);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            tick_label(c)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">unregularized cost</text>"#,
        x_off + 16.0,
        (top + bottom) / 2.0,
        x_off + 16.0,
        (top + bottom) / 2.0
    );

    for (slot, &i) in members.iter().enumerate() {
        let s = &series[i];
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(t, c)| format!("{:.2},{:.2}", x_of(t), y_of(c)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        // Decreasing curves leave the lower left corner free.
        let ly = bottom - 10.0 - 14.0 * (members.len() - 1 - slot) as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            left + 8.0,
            ly - 4.0,
            left + 30.0,
            ly - 4.0,
            left + 34.0,
            ly,
            escape(&s.label)
        );
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-2..1e4).contains(&a) {
        format!("{v:.4}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
