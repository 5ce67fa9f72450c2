//! Minimal SVG scatter plot for 2-D projections.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Renders `[n, 2]` points colored by label.
pub fn scatter_svg(points: &Tensor, labels: &[usize], title: &str) -> Result<String> {
    points.require_matrix("scatter points")?;
    if points.cols() != 2 || points.rows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "scatter needs [n, 2] points and n labels, got {:?} and {}",
            points.shape(),
            labels.len()
        )));
    }
    let (size, margin) = (480.0, 40.0);
    let bounds = |col: usize| {
        let (lo, hi) = (0..points.rows())
            .map(|i| points.get2(i, col))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let px = |v: f64| margin + (v - x0) / (x1 - x0) * (size - 2.0 * margin);
    let py = |v: f64| size - margin - (v - y0) / (y1 - y0) * (size - 2.0 * margin);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        size / 2.0,
        escape(title)
    )
    .unwrap();
    for (i, &l) in labels.iter().enumerate() {
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}" fill-opacity="0.8"/>"#,
            px(points.get2(i, 0)),
            py(points.get2(i, 1)),
            PALETTE[l % PALETTE.len()]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
