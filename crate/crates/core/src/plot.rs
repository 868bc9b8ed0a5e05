//! Minimal SVG line and scatter plots with linear axes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            x,
            y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Axes {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Axes {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
        }
    }
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about `n` ticks.
fn nice_step(span: f64, n: usize) -> f64 {
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> Result<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return Err(Error::EmptyInput("nothing to plot".into()));
    }
    if hi > lo {
        let pad = 0.04 * (hi - lo);
        Ok((lo - pad, hi + pad))
    } else {
        Ok((lo - 0.5, hi + 0.5))
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn open(svg: &mut String, frame: &Frame, axes: &Axes) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    for (range, horizontal) in [(frame.x, true), (frame.y, false)] {
        let step = nice_step(range.1 - range.0, 6);
        let mut v = (range.0 / step).ceil() * step;
        while v <= range.1 {
            let label = fmt_tick(v, step);
            if horizontal {
                let p = frame.px(v);
                let _ = writeln!(svg, r#"<line x1="{p:.1}" y1="{y1}" x2="{p:.1}" y2="{}" stroke="black"/>"#, y1 + 5.0);
                let _ = writeln!(svg, r#"<text x="{p:.1}" y="{}" text-anchor="middle">{label}</text>"#, y1 + 19.0);
            } else {
                let p = frame.py(v);
                let _ = writeln!(svg, r#"<line x1="{}" y1="{p:.1}" x2="{x0}" y2="{p:.1}" stroke="black"/>"#, x0 - 5.0);
                let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, x0 - 8.0, p + 4.0);
            }
            v += step;
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(&axes.title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&axes.y_label)
    );
}

fn legend(svg: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 22.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 28.0, y + 4.0, escape(label));
    }
}

/// Overlaid polylines, one colour per series.
pub fn line_plot(series: &[Series], axes: &Axes) -> Result<String> {
    if series.iter().any(|s| s.x.len() != s.y.len()) {
        return Err(Error::Shape("series x and y lengths differ".into()));
    }
    let frame = Frame {
        x: bounds(series.iter().flat_map(|s| &s.x))?,
        y: bounds(series.iter().flat_map(|s| &s.y))?,
    };
    let mut svg = String::new();
    open(&mut svg, &frame, axes);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.6" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            pts.join(" ")
        );
    }
    legend(&mut svg, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Predicted-vs-true scatter with ±`err` bars and the identity line.
pub fn scatter_plot(truth: &[f64], pred: &[f64], err: &[f64], axes: &Axes) -> Result<String> {
    if truth.len() != pred.len() || truth.len() != err.len() {
        return Err(Error::Shape("scatter inputs differ in length".into()));
    }
    let lo_hi: Vec<f64> = pred
        .iter()
        .zip(err)
        .flat_map(|(p, e)| [p - e, p + e])
        .chain(truth.iter().copied())
        .collect();
    let b = bounds(lo_hi.iter())?;
    let frame = Frame { x: b, y: b };
    let mut svg = String::new();
    open(&mut svg, &frame, axes);
    let _ = writeln!(
        svg,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="5,4"/>"#,
        frame.px(b.0),
        frame.py(b.0),
        frame.px(b.1),
        frame.py(b.1)
    );
    for ((&t, &p), &e) in truth.iter().zip(pred).zip(err) {
        let x = frame.px(t);
        if e > 0.0 {
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#9ecae1"/>"##,
                frame.py(p - e),
                frame.py(p + e)
            );
        }
        let _ = writeln!(svg, r##"<circle cx="{x:.1}" cy="{:.1}" r="2.5" fill="#1f77b4"/>"##, frame.py(p));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_are_round() {
        assert_eq!(nice_step(10.0, 5), 2.0);
        assert_eq!(nice_step(1.0, 6), 0.2);
        assert_eq!(nice_step(700.0, 6), 100.0);
    }

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let s = vec![
            Series::new("a", vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5]),
            Series::new("b<c>", vec![0.0, 2.0], vec![1.0, 1.0]),
        ];
        let svg = line_plot(&s, &Axes::new("t", "x", "y")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c&gt;"));
        assert!(line_plot(&[], &Axes::default()).is_err());
    }
}
