//! Trajectory chart as a standalone SVG document.
//!
//! Polylines are drawn in data coordinates (x = day, y = blue count) inside
//! a group whose transform maps them onto the plot area, so the points in
//! the file can be read back directly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 50.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot: the batch has no runs")]
    Empty,
    #[error("trajectory {index} has {len} points, expected {expected}")]
    Ragged { index: usize, len: usize, expected: usize },
    #[error("trajectory {index} has a count above {n_agents}")]
    OutOfRange { index: usize, n_agents: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Builds the SVG text: one polyline per trajectory, day on the x axis and
/// blue count (0..=n_agents) on the y axis.
pub fn trajectories_svg(
    title: &str,
    trajectories: &[Vec<usize>],
    n_agents: usize,
) -> Result<String, PlotError> {
    let first = trajectories.first().ok_or(PlotError::Empty)?;
    let n_days = first.len().saturating_sub(1).max(1);
    for (index, t) in trajectories.iter().enumerate() {
        if t.len() != first.len() {
            return Err(PlotError::Ragged { index, len: t.len(), expected: first.len() });
        }
        if t.iter().any(|&b| b > n_agents) {
            return Err(PlotError::OutOfRange { index, n_agents });
        }
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = plot_w / n_days as f64;
    let sy = plot_h / n_agents.max(1) as f64;
    let px = |day: f64| MARGIN_LEFT + day * sx;
    let py = |count: f64| MARGIN_TOP + plot_h - count * sy;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    let _ = writeln!(svg, r##"<g id="axes" stroke="#444" fill="#444">"##);
    let _ = writeln!(
        svg,
        r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/><line x1="{0}" y1="{1}" x2="{0}" y2="{3}"/>"#,
        px(0.0),
        py(0.0),
        px(n_days as f64),
        py(n_agents as f64)
    );
    for day in 0..=n_days {
        let x = px(day as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle" stroke="none">{day}</text>"#,
            py(0.0) + 16.0
        );
    }
    let step = if n_agents > 10 { 5 } else { 1 };
    for count in (0..=n_agents).step_by(step) {
        let y = py(count as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" stroke="none">{count}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" stroke="none">day</text>"#,
        px(n_days as f64 / 2.0),
        HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(14 {}) rotate(-90)" text-anchor="middle" stroke="none">blue shirts</text>"#,
        py(n_agents as f64 / 2.0)
    );
    svg.push_str("</g>\n");

    let _ = writeln!(
        svg,
        r#"<g id="runs" transform="translate({} {}) scale({sx} {})" fill="none" stroke="steelblue" stroke-opacity="0.35">"#,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        -sy
    );
    for t in trajectories {
        let points: Vec<String> = t.iter().enumerate().map(|(d, b)| format!("{d},{b}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"#,
            points.join(" ")
        );
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

/// Writes the chart to `out_path`. Nothing is written when the batch is
/// empty or malformed.
pub fn render_trajectories(
    title: &str,
    trajectories: &[Vec<usize>],
    n_agents: usize,
    out_path: &Path,
) -> Result<(), PlotError> {
    let svg = trajectories_svg(title, trajectories, n_agents)?;
    fs::write(out_path, svg).map_err(|source| PlotError::Io {
        path: out_path.display().to_string(),
        source,
    })
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
