//! CSV and plain-text output. Numbers are written with 17 significant
//! digits so that files round-trip exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::estimators::EstimateResult;
use crate::simulation::{ReplicationRow, SimulationRow};

pub const REPLICATION_HEADER: [&str; 6] = ["rep", "estimator", "point", "se", "covered", "error"];
pub const SUMMARY_HEADER: [&str; 11] = [
    "estimator",
    "label",
    "mean_point",
    "rel_bias_pct",
    "mc_sd",
    "mean_se",
    "mc_error",
    "coverage_pct",
    "n_ok",
    "n_failed",
    "incomplete",
];
pub const ESTIMATE_HEADER: [&str; 6] = ["method", "point", "se", "ci_low", "ci_high", "diagnostics"];

/// `{:.16e}` for finite values, `NaN`, `inf` or `-inf` otherwise.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn io<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(e.to_string())
}

pub fn write_replications_csv<W: Write>(out: W, rows: &[ReplicationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLICATION_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.rep.to_string(),
            r.method.tag().to_string(),
            format_number(r.point),
            format_number(r.se),
            u8::from(r.covered).to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SimulationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.estimator.tag().to_string(),
            r.estimator.label().to_string(),
            format_number(r.mean_point),
            format_number(r.rel_bias_pct),
            format_number(r.mc_sd),
            format_number(r.mean_se),
            format_number(r.mc_error),
            format_number(r.coverage_pct),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            r.incomplete.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_estimates_csv<W: Write>(out: W, results: &[EstimateResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER).map_err(io)?;
    for r in results {
        w.write_record([
            r.method.tag().to_string(),
            format_number(r.point),
            format_number(r.se),
            format_number(r.ci.0),
            format_number(r.ci.1),
            r.diagnostics_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Aligned table with the columns of the summary, rounded for reading.
pub fn format_table(rows: &[SimulationRow]) -> String {
    let header = ["Estimator", "Point", "Rel. bias (%)", "SD", "SE", "MC error", "Coverage (%)", "Failed"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            let label = if r.incomplete {
                format!("{} [incomplete]", r.estimator.label())
            } else {
                r.estimator.label().to_string()
            };
            [
                label,
                format!("{:.3}", r.mean_point),
                format!("{:.1}", r.rel_bias_pct),
                format!("{:.3}", r.mc_sd),
                format!("{:.3}", r.mean_se),
                format!("{:.4}", r.mc_error),
                format!("{:.1}", r.coverage_pct),
                r.n_failed.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (k, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if k == 0 {
                s.push_str(&format!("{cell:<w$}"));
            } else {
                s.push_str(&format!("  {cell:>w$}"));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
