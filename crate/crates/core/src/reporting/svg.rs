//! Minimal hand-rolled SVG plots: scaled data points, posterior mean per
//! condition, +/-2 standard-deviation bands, and the significance annotation.
//! No external renderer; fixed coordinate formatting keeps output
//! deterministic.

use std::fmt::Write;

use super::{significance_stars, PredictionGrid};
use crate::inference::ProteinFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;
const CONTROL_COLOR: &str = "#3b6fb3";
const PERTURBATION_COLOR: &str = "#4a9a5f";

struct Frame {
    t_lo: f64,
    t_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN_LEFT + (t - self.t_lo) / (self.t_hi - self.t_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let inner = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        HEIGHT - MARGIN_BOTTOM - (v - self.y_lo) / (self.y_hi - self.y_lo) * inner
    }
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn polyline(out: &mut String, frame: &Frame, temps: &[f64], values: &[f64], color: &str) {
    let points: Vec<String> = temps
        .iter()
        .zip(values)
        .map(|(&t, &v)| format!("{},{}", fmt2(frame.x(t)), fmt2(frame.y(v))))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"##,
        points.join(" ")
    );
}

fn band(out: &mut String, frame: &Frame, temps: &[f64], mean: &[f64], sd: &[f64], color: &str) {
    let mut points = Vec::with_capacity(temps.len() * 2);
    for i in 0..temps.len() {
        points.push(format!(
            "{},{}",
            fmt2(frame.x(temps[i])),
            fmt2(frame.y(mean[i] + 2.0 * sd[i]))
        ));
    }
    for i in (0..temps.len()).rev() {
        points.push(format!(
            "{},{}",
            fmt2(frame.x(temps[i])),
            fmt2(frame.y(mean[i] - 2.0 * sd[i]))
        ));
    }
    let _ = writeln!(
        out,
        r##"<polygon fill="{color}" fill-opacity="0.18" stroke="none" points="{}"/>"##,
        points.join(" ")
    );
}

fn circles(out: &mut String, frame: &Frame, fit_points: &[(f64, f64)], color: &str) {
    for &(t, v) in fit_points {
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="3" fill="{color}" fill-opacity="0.75"/>"##,
            fmt2(frame.x(t)),
            fmt2(frame.y(v))
        );
    }
}

/// Render one protein's melting-curve plot.
pub fn render_protein_plot(fit: &ProteinFit, grid: &PredictionGrid, p_adjusted: f64) -> String {
    let control_points: Vec<(f64, f64)> = fit
        .control
        .design()
        .temps()
        .iter()
        .zip(fit.control.design().values())
        .map(|(&t, &v)| (t, v))
        .collect();
    let perturbation_points: Vec<(f64, f64)> = fit
        .perturbation
        .design()
        .temps()
        .iter()
        .zip(fit.perturbation.design().values())
        .map(|(&t, &v)| (t, v))
        .collect();

    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for &(_, v) in control_points.iter().chain(&perturbation_points) {
        y_lo = y_lo.min(v);
        y_hi = y_hi.max(v);
    }
    for i in 0..grid.temps.len() {
        y_lo = y_lo.min(grid.control_mean[i] - 2.0 * grid.control_sd[i]);
        y_lo = y_lo.min(grid.perturbation_mean[i] - 2.0 * grid.perturbation_sd[i]);
        y_hi = y_hi.max(grid.control_mean[i] + 2.0 * grid.control_sd[i]);
        y_hi = y_hi.max(grid.perturbation_mean[i] + 2.0 * grid.perturbation_sd[i]);
    }
    let pad = 0.05 * (y_hi - y_lo).max(1e-6);
    let frame = Frame {
        t_lo: grid.temps[0],
        t_hi: *grid.temps.last().expect("nonempty grid"),
        y_lo: y_lo - pad,
        y_hi: y_hi + pad,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(out, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"##);

    // Axes.
    let x0 = fmt2(MARGIN_LEFT);
    let x1 = fmt2(WIDTH - MARGIN_RIGHT);
    let y0 = fmt2(HEIGHT - MARGIN_BOTTOM);
    let y1 = fmt2(MARGIN_TOP);
    let _ = writeln!(
        out,
        r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333" stroke-width="1"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333" stroke-width="1"/>"##
    );
    for k in 0..=5 {
        let t = frame.t_lo + (frame.t_hi - frame.t_lo) * k as f64 / 5.0;
        let x = fmt2(frame.x(t));
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="#333" stroke-width="1"/>"##,
            fmt2(HEIGHT - MARGIN_BOTTOM + 4.0)
        );
        let _ = writeln!(
            out,
            r##"<text x="{x}" y="{}" font-size="11" text-anchor="middle" fill="#333">{:.1}</text>"##,
            fmt2(HEIGHT - MARGIN_BOTTOM + 18.0),
            t
        );
    }
    for k in 0..=4 {
        let v = frame.y_lo + (frame.y_hi - frame.y_lo) * k as f64 / 4.0;
        let y = fmt2(frame.y(v));
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="#333" stroke-width="1"/>"##,
            fmt2(MARGIN_LEFT - 4.0)
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{y}" font-size="11" text-anchor="end" dominant-baseline="middle" fill="#333">{:.2}</text>"##,
            fmt2(MARGIN_LEFT - 8.0),
            v
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-size="12" text-anchor="middle" fill="#333">temperature (C)</text>"##,
        fmt2((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt2(HEIGHT - 14.0)
    );
    let _ = writeln!(
        out,
        r##"<text x="16" y="{}" font-size="12" text-anchor="middle" fill="#333" transform="rotate(-90 16 {})">scaled abundance</text>"##,
        fmt2((MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0),
        fmt2((MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0)
    );

    // Bands first, then means, then data.
    band(&mut out, &frame, &grid.temps, &grid.control_mean, &grid.control_sd, CONTROL_COLOR);
    band(
        &mut out,
        &frame,
        &grid.temps,
        &grid.perturbation_mean,
        &grid.perturbation_sd,
        PERTURBATION_COLOR,
    );
    polyline(&mut out, &frame, &grid.temps, &grid.control_mean, CONTROL_COLOR);
    polyline(
        &mut out,
        &frame,
        &grid.temps,
        &grid.perturbation_mean,
        PERTURBATION_COLOR,
    );
    circles(&mut out, &frame, &control_points, CONTROL_COLOR);
    circles(&mut out, &frame, &perturbation_points, PERTURBATION_COLOR);

    // Title and legend.
    let stars = significance_stars(p_adjusted);
    let _ = writeln!(
        out,
        r##"<text x="{}" y="26" font-size="14" text-anchor="middle" fill="#111">{} (adj. p = {:.3e} {stars})</text>"##,
        fmt2(WIDTH / 2.0),
        xml_escape(&fit.protein_id),
        p_adjusted
    );
    let lx = WIDTH - MARGIN_RIGHT - 150.0;
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="12" height="4" fill="{CONTROL_COLOR}"/>"##,
        fmt2(lx),
        fmt2(MARGIN_TOP + 6.0)
    );
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-size="11" fill="#333">control</text>"##,
        fmt2(lx + 18.0),
        fmt2(MARGIN_TOP + 11.0)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="12" height="4" fill="{PERTURBATION_COLOR}"/>"##,
        fmt2(lx),
        fmt2(MARGIN_TOP + 22.0)
    );
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-size="11" fill="#333">perturbation</text>"##,
        fmt2(lx + 18.0),
        fmt2(MARGIN_TOP + 27.0)
    );

    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
