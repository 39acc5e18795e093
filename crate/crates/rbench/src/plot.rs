//! Deterministic SVG scatter plots on logit-scaled axes.
//!
//! Both axes are logit-scaled, so β and β_λ are straight lines in plot
//! coordinates and their polylines are exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rbench_core::metrics::{inv_logit, logit, AccuracyPoint, LogitLinearFit};

pub const SIZE: f64 = 1000.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 90.0;
const CURVE_SAMPLES: usize = 64;
const TICKS_PCT: [f64; 17] = [
    0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 95.0, 98.0, 99.0, 99.5,
];

/// Everything drawn in one plot.
#[derive(Debug, Clone)]
pub struct Scatter {
    pub title: String,
    pub fit: LogitLinearFit,
    pub d: f64,
    pub lambda: f64,
    pub standard: Vec<AccuracyPoint>,
    pub interventions: Vec<(String, AccuracyPoint)>,
    /// Reference OOD accuracy; the region above it has τ > 0.
    pub reference_ood: Option<f64>,
}

/// Maps accuracies to pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Axes {
    /// Logit-space bounds covering every point, padded by 8% per side.
    pub fn covering(s: &Scatter) -> Self {
        let clamp = |v: f64| logit(v.clamp(0.002, 0.998)).expect("clamped into (0, 1)");
        let xs: Vec<f64> = s
            .standard
            .iter()
            .chain(s.interventions.iter().map(|(_, p)| p))
            .map(|p| clamp(p.acc_id))
            .collect();
        let ys: Vec<f64> = s
            .standard
            .iter()
            .chain(s.interventions.iter().map(|(_, p)| p))
            .map(|p| clamp(p.acc_ood))
            .chain(s.reference_ood.map(clamp))
            .collect();
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                return (-2.0, 2.0);
            }
            let pad = ((hi - lo) * 0.08).max(0.25);
            (lo - pad, hi + pad)
        };
        let (x_lo, x_hi) = span(&xs);
        let (y_lo, y_hi) = span(&ys);
        Self { x_lo, x_hi, y_lo, y_hi }
    }

    pub fn px_x_logit(&self, t: f64) -> f64 {
        MARGIN_LEFT + (t - self.x_lo) / (self.x_hi - self.x_lo) * (SIZE - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn px_y_logit(&self, t: f64) -> f64 {
        SIZE - MARGIN_BOTTOM - (t - self.y_lo) / (self.y_hi - self.y_lo) * (SIZE - MARGIN_TOP - MARGIN_BOTTOM)
    }

    /// Pixel position of an accuracy pair (fractions in `(0, 1)`).
    pub fn px(&self, acc_id: f64, acc_ood: f64) -> (f64, f64) {
        (
            self.px_x_logit(logit(acc_id).expect("accuracy inside (0, 1)")),
            self.px_y_logit(logit(acc_ood).expect("accuracy inside (0, 1)")),
        )
    }
}

fn curve_points(axes: &Axes, fit: &LogitLinearFit, shift: f64) -> String {
    (0..=CURVE_SAMPLES)
        .map(|i| {
            let t = axes.x_lo + (axes.x_hi - axes.x_lo) * i as f64 / CURVE_SAMPLES as f64;
            let id = inv_logit(t);
            let ood = fit.form.invert(fit.linear(fit.form.apply(id).unwrap_or(t)) + shift);
            let y = axes.px_y_logit(logit(ood.clamp(1e-12, 1.0 - 1e-12)).expect("clamped"));
            format!("{:.3},{:.3}", axes.px_x_logit(t), y)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_pct(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{p:.0}")
    } else {
        format!("{p}")
    }
}

pub fn render_svg(s: &Scatter) -> String {
    let axes = Axes::covering(s);
    let (left, right) = (MARGIN_LEFT, SIZE - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, SIZE - MARGIN_BOTTOM);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        out,
        r#"<defs><clipPath id="plot-area"><rect x="{left:.3}" y="{top:.3}" width="{:.3}" height="{:.3}"/></clipPath></defs>"#,
        right - left,
        bottom - top
    );
    let _ = writeln!(out, r##"<rect width="{SIZE}" height="{SIZE}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="30.000" text-anchor="middle" font-family="sans-serif" font-size="20">{}</text>"#,
        SIZE / 2.0,
        escape(&s.title)
    );

    if let Some(r) = s.reference_ood {
        let y = axes
            .px_y_logit(logit(r.clamp(1e-12, 1.0 - 1e-12)).expect("clamped"))
            .clamp(top, bottom);
        let _ = writeln!(
            out,
            r##"<rect class="tau-region" x="{left:.3}" y="{top:.3}" width="{:.3}" height="{:.3}" fill="#cfe0f7" fill-opacity="0.6"/>"##,
            right - left,
            y - top
        );
    }

    // Ticks and grid.
    let mut ticks = String::new();
    for p in TICKS_PCT {
        let t = logit(p / 100.0).expect("tick inside (0, 1)");
        if (axes.x_lo..=axes.x_hi).contains(&t) {
            let x = axes.px_x_logit(t);
            let _ = writeln!(
                ticks,
                r##"<line x1="{x:.3}" y1="{top:.3}" x2="{x:.3}" y2="{bottom:.3}" stroke="#e0e0e0"/><text x="{x:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"##,
                bottom + 22.0,
                fmt_pct(p)
            );
        }
        if (axes.y_lo..=axes.y_hi).contains(&t) {
            let y = axes.px_y_logit(t);
            let _ = writeln!(
                ticks,
                r##"<line x1="{left:.3}" y1="{y:.3}" x2="{right:.3}" y2="{y:.3}" stroke="#e0e0e0"/><text x="{:.3}" y="{:.3}" text-anchor="end" font-family="sans-serif" font-size="14">{}</text>"##,
                left - 8.0,
                y + 5.0,
                fmt_pct(p)
            );
        }
    }
    out.push_str(&ticks);
    let _ = writeln!(
        out,
        r##"<rect x="{left:.3}" y="{top:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#000000"/>"##,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="16">ID accuracy (%)</text>"#,
        (left + right) / 2.0,
        SIZE - 30.0
    );
    let _ = writeln!(
        out,
        r#"<text x="25.000" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="16" transform="rotate(-90 25.000 {:.3})">OOD accuracy (%)</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );

    let _ = writeln!(out, r#"<g clip-path="url(#plot-area)">"#);
    let _ = writeln!(
        out,
        r##"<polyline class="beta" fill="none" stroke="#222222" stroke-width="2" points="{}"/>"##,
        curve_points(&axes, &s.fit, 0.0)
    );
    let _ = writeln!(
        out,
        r##"<polyline class="beta-lambda" fill="none" stroke="#222222" stroke-width="2" stroke-dasharray="8 6" points="{}"/>"##,
        curve_points(&axes, &s.fit, s.lambda * s.d)
    );
    for p in &s.standard {
        let (x, y) = axes.px(p.acc_id.clamp(0.002, 0.998), p.acc_ood.clamp(0.002, 0.998));
        let _ = writeln!(
            out,
            r##"<circle class="standard" cx="{x:.3}" cy="{y:.3}" r="5" fill="#7f7f7f"/>"##
        );
    }
    for (name, p) in &s.interventions {
        let (x, y) = axes.px(p.acc_id.clamp(0.002, 0.998), p.acc_ood.clamp(0.002, 0.998));
        let _ = writeln!(
            out,
            r##"<g class="intervention"><rect x="{:.3}" y="{:.3}" width="12" height="12" fill="#d62728"/><text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="14">{}</text></g>"##,
            x - 6.0,
            y - 6.0,
            x + 10.0,
            y - 10.0,
            escape(name)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

pub fn write_svg(path: &Path, s: &Scatter) -> std::io::Result<()> {
    fs::write(path, render_svg(s))
}

/// `(x, y)` pairs of the polyline with the given class attribute.
pub fn polyline(svg: &str, class: &str) -> Option<Vec<(f64, f64)>> {
    let marker = format!(r#"class="{class}""#);
    let line = svg.lines().find(|l| l.contains("<polyline") && l.contains(&marker))?;
    let start = line.find("points=\"")? + 8;
    let end = start + line[start..].find('"')?;
    line[start..end]
        .split(' ')
        .map(|pair| {
            let (x, y) = pair.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}

/// Linear interpolation of a polyline's y at pixel `x`.
pub fn y_at(points: &[(f64, f64)], x: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        (x0 <= x && x <= x1).then(|| y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    })
}
