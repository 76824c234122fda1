//! Scatter plots of generator samples.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use sgan_core::gan::Samples;

/// Fill color of generator `g` is `PALETTE[g % 10]`.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Data coordinates shown: `[-VIEW, VIEW]^2`.
pub const VIEW: f64 = 3.0;
const SIZE: f64 = 600.0;
const POINT_RADIUS: f64 = 1.5;
const CROSS_HALF: f64 = 6.0;

fn px(v: f64) -> f64 {
    (v + VIEW) / (2.0 * VIEW) * SIZE
}

fn py(v: f64) -> f64 {
    (VIEW - v) / (2.0 * VIEW) * SIZE
}

/// Renders samples colored by generator label, with axes and a cross at
/// each mode center. Only point markers carry a `fill` attribute.
pub fn scatter_svg(samples: &Samples, centers: &[[f64; 2]]) -> Result<String> {
    ensure!(
        samples.points.cols == 2 || samples.points.rows == 0,
        "scatter plots need 2-D samples, got {} columns",
        samples.points.cols
    );
    ensure!(
        samples.labels.len() == samples.points.rows,
        "{} labels for {} samples",
        samples.labels.len(),
        samples.points.rows
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let (lo, mid, hi) = (px(-VIEW), px(0.0), px(VIEW));
    let _ = writeln!(
        s,
        r##"<g stroke="#999999" stroke-width="1"><line x1="{lo:.2}" y1="{mid:.2}" x2="{hi:.2}" y2="{mid:.2}"/><line x1="{mid:.2}" y1="{lo:.2}" x2="{mid:.2}" y2="{hi:.2}"/></g>"##
    );
    s.push_str("<g>\n");
    for (i, &label) in samples.labels.iter().enumerate() {
        let p = samples.points.row(i);
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{POINT_RADIUS}" fill="{}"/>"#,
            px(p[0]),
            py(p[1]),
            PALETTE[label % PALETTE.len()]
        );
    }
    s.push_str("</g>\n");
    s.push_str("<g stroke=\"#000000\" stroke-width=\"1.5\">\n");
    for c in centers {
        let (x, y) = (px(c[0]), py(c[1]));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            x - CROSS_HALF,
            y - CROSS_HALF,
            x + CROSS_HALF,
            y + CROSS_HALF,
            x - CROSS_HALF,
            y + CROSS_HALF,
            x + CROSS_HALF,
            y - CROSS_HALF
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn emit_scatter_svg(samples: &Samples, centers: &[[f64; 2]], path: &Path) -> Result<()> {
    let svg = scatter_svg(samples, centers)?;
    std::fs::write(path, svg).with_context(|| format!("cannot write {}", path.display()))
}
