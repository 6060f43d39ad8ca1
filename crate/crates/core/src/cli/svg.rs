//! Minimal SVG rendering for error histograms and trajectory overlays.

use std::fmt::Write;

use crate::geo::{BBox, LocalFrame};
use crate::metrics::EvalReport;
use crate::trajectory::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    out.push('\n');
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN / 2.0 + 14.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            WIDTH - 160.0,
            y - 9.0,
            WIDTH - 145.0,
            y,
            escape(label)
        );
    }
}

fn bin_label(lo: f64, hi: f64) -> String {
    if hi.is_finite() {
        format!("{lo:.1}")
    } else {
        format!("{lo:.1}+")
    }
}

/// Grouped bars of the per-report error histograms, as fractions of each
/// report's trajectories.
pub fn histogram(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    header(&mut out);
    let Some(first) = reports.first() else {
        out.push_str("</svg>\n");
        return out;
    };
    let edges = &first.histogram.edges;
    let nbins = edges.len() - 1;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let group_w = plot_w / nbins as f64;
    let bar_w = group_w * 0.8 / reports.len() as f64;
    let frac = |r: &EvalReport, k: usize| {
        let n: usize = r.histogram.counts.iter().sum();
        if n == 0 {
            0.0
        } else {
            r.histogram.counts.get(k).copied().unwrap_or(0) as f64 / n as f64
        }
    };
    let ymax = reports
        .iter()
        .flat_map(|r| (0..nbins).map(move |k| frac(r, k)))
        .fold(0.0, f64::max)
        .max(1e-9);
    let base_y = HEIGHT - MARGIN;
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{base_y}" x2="{:.2}" y2="{base_y}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    for (ri, r) in reports.iter().enumerate() {
        let color = PALETTE[ri % PALETTE.len()];
        for k in 0..nbins {
            let h = frac(r, k) / ymax * plot_h;
            let x = MARGIN + k as f64 * group_w + group_w * 0.1 + ri as f64 * bar_w;
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}"/>"#,
                base_y - h
            );
        }
    }
    for k in (0..nbins).step_by(2) {
        let x = MARGIN + k as f64 * group_w;
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="9">{}</text>"#,
            base_y + 12.0,
            bin_label(edges[k], edges[k + 1])
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11">Fréchet distance (km)</text>"#,
        WIDTH / 2.0 - 50.0,
        HEIGHT - 8.0
    );
    let labels: Vec<&str> = reports.iter().map(|r| r.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// One polyline per labelled trajectory, in a shared local frame with north
/// up.
pub fn overlay(layers: &[(&str, &Trajectory)]) -> String {
    let mut out = String::new();
    header(&mut out);
    let bbox = BBox::enclosing(
        layers
            .iter()
            .flat_map(|(_, t)| t.positions().collect::<Vec<_>>()),
    );
    let Some(frame) = bbox.and_then(|b| LocalFrame::at(b.centroid()).ok()) else {
        out.push_str("</svg>\n");
        return out;
    };
    let local: Vec<Vec<(f64, f64)>> = layers
        .iter()
        .map(|(_, t)| t.positions().map(|p| frame.to_local(p)).collect())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in local.iter().flatten() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1.0);
    let scale = (HEIGHT - 2.0 * MARGIN) / span;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    for (i, pts) in local.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    WIDTH / 2.0 + (x - cx) * scale,
                    HEIGHT / 2.0 - (y - cy) * scale
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="traj" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(layers[i].0),
            coords.join(" ")
        );
    }
    let labels: Vec<&str> = layers.iter().map(|(l, _)| *l).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}
