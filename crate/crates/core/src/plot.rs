//! Standalone SVG line charts of persisted run records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::record::parse_float;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// One curve: `(epoch, value)` pairs plus the epoch the run diverged at, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub diverged_at: Option<usize>,
}

/// Reads `epoch` and `metric` columns of a RunRecord CSV. The legend label is
/// the file stem.
pub fn read_series(path: impl AsRef<Path>, metric: &str) -> Result<Series> {
    let path = path.as_ref();
    let err = |message: String| Error::Record {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| err("empty record".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| err(format!("missing column `{name}`")))
    };
    let epoch_col = col("epoch")?;
    let metric_col = col(metric)?;

    let mut points = Vec::new();
    let mut diverged_at = None;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line.trim().is_empty() {
            continue;
        }
        if fields[0] == "diverged" {
            let epoch = fields
                .get(1)
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| err(format!("line {}: bad divergence trailer", i + 2)))?;
            diverged_at = Some(epoch);
            break;
        }
        let get = |j: usize| {
            fields
                .get(j)
                .and_then(|f| parse_float(f))
                .ok_or_else(|| err(format!("line {}: bad value in column {}", i + 2, header[j])))
        };
        points.push((get(epoch_col)?, get(metric_col)?));
    }
    if points.is_empty() {
        return Err(err("empty record".into()));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Series {
        label,
        points,
        diverged_at,
    })
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Axis bounds snapped to tick multiples, and the tick step.
fn axis(lo: f64, hi: f64) -> (f64, f64, f64) {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    };
    let step = nice_step(hi - lo);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders one polyline per series with linear axes, tick labels and a legend.
pub fn render_svg(series: &[Series], metric: &str) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let finite = |f: fn(&(f64, f64)) -> f64| {
        series
            .iter()
            .flat_map(|s| s.points.iter().map(f))
            .filter(|v| v.is_finite())
            .collect::<Vec<f64>>()
    };
    let xs = finite(|p| p.0);
    let ys = finite(|p| p.1);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi, x_step) = if xs.is_empty() { axis(0.0, 1.0) } else { axis(min(&xs), max(&xs)) };
    let (y_lo, y_hi, y_step) = if ys.is_empty() { axis(0.0, 1.0) } else { axis(min(&ys), max(&ys)) };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // grid and ticks
    let ticks = |lo: f64, hi: f64, step: f64| {
        let n = ((hi - lo) / step).round() as i64;
        (0..=n).map(move |i| lo + i as f64 * step)
    };
    for x in ticks(x_lo, x_hi, x_step) {
        let sx = px(x);
        let _ = writeln!(
            s,
            r##"<line x1="{sx:.2}" y1="{TOP:.2}" x2="{sx:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{sx:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 18.0,
            tick_label(x, x_step)
        );
    }
    for y in ticks(y_lo, y_hi, y_step) {
        let sy = py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{sy:.2}" x2="{:.2}" y2="{sy:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            sy + 4.0,
            tick_label(y, y_step)
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(metric)
    );

    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        if let Some(epoch) = series.diverged_at {
            if let Some(&(x, y)) = series.points.iter().rev().find(|(x, y)| x.is_finite() && y.is_finite()) {
                let (sx, sy) = (px(x), py(y));
                let _ = writeln!(
                    s,
                    r#"<circle class="diverged" cx="{sx:.2}" cy="{sy:.2}" r="4" fill="{color}"/><text class="diverged" x="{:.2}" y="{:.2}" fill="{color}">diverged @ {epoch}</text>"#,
                    sx + 6.0,
                    sy - 6.0
                );
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads every record, renders `metric` against epoch and writes the SVG.
pub fn emit_plot<P: AsRef<Path>>(records: &[P], metric: &str, out: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to plot".into()));
    }
    let series = records
        .iter()
        .map(|p| read_series(p, metric))
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(&series, metric)?;
    let out = out.as_ref();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, svg)?;
    Ok(())
}
