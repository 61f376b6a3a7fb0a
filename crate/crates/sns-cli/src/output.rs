//! Bit-stable table and plot-data writers.
//!
//! CSV is RFC-4180-style: header row, `.` decimal separator, scientific
//! notation with 17 significant digits, LF line endings. The same inputs
//! produce the same bytes on every platform.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use sns_core::experiments::{ErrorTable, RateFit};

use crate::CliError;

/// 17 significant digits in scientific notation — enough to round-trip any
/// f64 exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::Io)?;
    }
    let mut f = fs::File::create(path).map_err(CliError::Io)?;
    f.write_all(text.as_bytes()).map_err(CliError::Io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    write_text(path, &(text + "\n"))
}

/// `errors.csv`: one row per (scheme, τ, measure).
pub fn errors_csv(table: &ErrorTable) -> String {
    let mut out = String::from("scheme,tau,measure,estimate,stderr,samples\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scheme,
            fmt_float(r.tau),
            r.measure.label(),
            fmt_float(r.estimate),
            fmt_float(r.stderr),
            r.samples
        ));
    }
    out
}

/// Two-column log-log plot data (`ln τ`, `ln estimate`), one file per curve.
pub fn plotdata(rows: &[(f64, f64)]) -> String {
    let mut out = String::new();
    for &(tau, est) in rows {
        if tau > 0.0 && est > 0.0 {
            out.push_str(&format!("{} {}\n", fmt_float(tau.ln()), fmt_float(est.ln())));
        }
    }
    out
}

/// Sanitises a measure/scheme label into a file stem.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

/// A generic numeric time-series CSV: `t,col1,col2,...`.
pub fn series_csv(header: &[&str], times: &[f64], cols: &[&[f64]]) -> String {
    let mut out = String::from("t");
    for h in header {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (k, &t) in times.iter().enumerate() {
        out.push_str(&fmt_float(t));
        for col in cols {
            out.push(',');
            out.push_str(&fmt_float(col[k]));
        }
        out.push('\n');
    }
    out
}

/// Minimal static SVG of log-log error curves (optional `svg-plot-data`
/// output format). Axes are linear in ln τ / ln error.
pub fn svg_loglog(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 480.0);
    let pts: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|(_, c)| c.iter())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.is_empty() {
        return String::from("<svg xmlns=\"http://www.w3.org/2000/svg\"/>\n");
    }
    let (mut x0, mut x1, mut y0, mut y1) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = |x: f64| 60.0 + (w - 80.0) * (x - x0) / (x1 - x0).max(1e-12);
    let sy = |y: f64| (h - 40.0) - (h - 80.0) * (y - y0) / (y1 - y0).max(1e-12);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<g stroke=\"black\" fill=\"none\">\
         <line x1=\"60\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\"/><line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"{0}\"/></g>\n",
        h - 40.0,
        w - 20.0
    ));
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = palette[i % palette.len()];
        let path: Vec<String> = curve
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x.ln()), sy(y.ln())))
            .collect();
        if path.is_empty() {
            continue;
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" stroke=\"{color}\" fill=\"none\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"70\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{label}</text>\n",
            55 + 14 * i
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// `rates.json` payload.
#[derive(Serialize)]
pub struct RatesReport {
    pub fits: Vec<RateFit>,
    /// Measure/scheme pairs where the fit had too few usable points, with
    /// the detected error floor.
    pub insufficient: Vec<InsufficientEntry>,
}

#[derive(Serialize)]
pub struct InsufficientEntry {
    pub scheme: String,
    pub measure: String,
    pub floor: Option<f64>,
}
