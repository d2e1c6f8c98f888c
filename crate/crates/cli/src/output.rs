//! Result serialization: CSV tables, key/value reports, and optional SVG
//! line plots. All angular frequencies are converted to ordinary frequencies
//! in Hz here, at the serialization boundary, and nowhere else. Floats are
//! written with the shortest representation that round-trips exactly, so
//! identical computations produce byte-identical files.

use crate::fault::{CliError, CliResult};
use ladderspec::units::angular_to_hz;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Format a float with the shortest exact round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write a text file, classifying failures as computation-stage errors.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::compute(format!("cannot write `{}`: {e}", path.display())))
}

/// Write a CSV with a fixed header and one row per item.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut text = String::with_capacity(4096);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                text.push(',');
            }
            let _ = write!(text, "{v}");
            first = false;
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// A `key = value` report with deterministic line order.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    /// Start an empty report.
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a string-valued entry.
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }

    /// Append a float entry (shortest round-trip form).
    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, fmt_f64(value));
    }

    /// Append an angular-frequency entry, serialized in Hz.
    pub fn push_angular_as_hz(&mut self, key: &str, omega: f64) {
        self.push(key, fmt_f64(angular_to_hz(omega)));
    }

    /// Render to `key = value` lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Write the rendered report to a file.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.render())
    }
}

/// Render a minimal standalone SVG line plot.
///
/// Self-contained output: fixed canvas, plain axes with five ticks per side,
/// and a single polyline. Pixel coordinates are rounded to two decimals so
/// the file is deterministic.
pub fn svg_line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    x: &[f64],
    y: &[f64],
) -> CliResult<()> {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const ML: f64 = 78.0; // left margin
    const MR: f64 = 22.0;
    const MT: f64 = 42.0;
    const MB: f64 = 58.0;

    let (x_lo, x_hi) = padded_range(x);
    let (y_lo, y_hi) = padded_range(y);
    let px = |v: f64| ML + (v - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let py = |v: f64| H - MB - (v - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::with_capacity(8192);
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"26\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>",
        ML + (W - ML - MR) / 2.0,
        escape(title)
    );

    // Axes box.
    let _ = writeln!(
        svg,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"black\"/>",
        W - ML - MR,
        H - MT - MB
    );

    // Ticks and labels.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let xp = px(xv);
        let yp = py(yv);
        let _ = writeln!(
            svg,
            "<line x1=\"{xp:.2}\" y1=\"{:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            H - MB,
            H - MB + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{xp:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>",
            H - MB + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{ML}\" y2=\"{yp:.2}\" stroke=\"black\"/>",
            ML - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>",
            ML - 8.0,
            yp + 4.0,
            tick_label(yv)
        );
    }

    // Axis labels.
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>",
        ML + (W - ML - MR) / 2.0,
        H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"20\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">{}</text>",
        MT + (H - MT - MB) / 2.0,
        MT + (H - MT - MB) / 2.0,
        escape(y_label)
    );

    // Data polyline.
    let mut points = String::new();
    for (xi, yi) in x.iter().zip(y) {
        let _ = write!(points, "{:.2},{:.2} ", px(*xi), py(*yi));
    }
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#2266aa\" stroke-width=\"1.5\"/>",
        points.trim_end()
    );
    let _ = writeln!(svg, "</svg>");
    write_text(path, &svg)
}

/// Data range with 5% padding; degenerate spans widen to a unit interval.
fn padded_range(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Short deterministic tick label.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Minimal XML text escaping for labels.
fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Join an output directory with a file name, creating the directory.
pub fn out_path(dir: &Path, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::compute(format!("cannot create output directory `{}`: {e}", dir.display()))
    })?;
    Ok(dir.join(name))
}
