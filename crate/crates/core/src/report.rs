//! CSV output and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schemes::{RoundMetrics, RunReport};

pub const CSV_HEADER: &str = "round,scheme,train_loss,test_accuracy,round_latency_s,cumulative_latency_s";
pub const SUMMARY_HEADER: &str =
    "scheme,final_accuracy,target_accuracy,rounds_to_target,mean_round_latency_s,total_latency_s";

/// Formats like C's `%g`: six significant digits, trailing zeros removed,
/// scientific notation when the exponent is below -4 or at least 6.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("`e` in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(m: &RoundMetrics) -> String {
    format!(
        "{},{},{},{},{},{}",
        m.round,
        m.scheme,
        format_sig6(m.train_loss),
        format_sig6(m.test_accuracy),
        format_sig6(m.round_latency_s),
        format_sig6(m.cumulative_latency_s)
    )
}

/// Header plus one LF-terminated row per round.
pub fn render_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::with_capacity(64 * (metrics.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&csv_row(m));
        out.push('\n');
    }
    out
}

pub fn emit_csv(metrics: &[RoundMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if metrics.is_empty() {
        return Err(Error::Contract("refusing to write an empty metrics file".into()));
    }
    write_file(path, render_csv(metrics).as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Per-scheme line of a comparison: final accuracy and how many rounds it
/// took to reach `target` (90% of the centralized run's final accuracy).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: String,
    pub final_accuracy: f64,
    pub target_accuracy: f64,
    pub rounds_to_target: Option<usize>,
    pub mean_round_latency_s: f64,
    pub total_latency_s: f64,
}

pub const TARGET_FRACTION_OF_CL: f64 = 0.9;

pub fn summarize(reports: &[RunReport]) -> Vec<SchemeSummary> {
    let cl_final = reports
        .iter()
        .find(|r| r.scheme == crate::Scheme::Cl)
        .map_or(0.0, RunReport::final_accuracy);
    let target = TARGET_FRACTION_OF_CL * cl_final;
    reports
        .iter()
        .map(|r| {
            let total = r.metrics.last().map_or(0.0, |m| m.cumulative_latency_s);
            SchemeSummary {
                scheme: r.scheme.to_string(),
                final_accuracy: r.final_accuracy(),
                target_accuracy: target,
                rounds_to_target: r.rounds_to_reach(target),
                mean_round_latency_s: total / r.metrics.len().max(1) as f64,
                total_latency_s: total,
            }
        })
        .collect()
}

pub fn render_summary(rows: &[SchemeSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.scheme,
            format_sig6(s.final_accuracy),
            format_sig6(s.target_accuracy),
            s.rounds_to_target.map_or_else(|| "none".to_string(), |r| r.to_string()),
            format_sig6(s.mean_round_latency_s),
            format_sig6(s.total_latency_s)
        ));
    }
    out
}

pub fn emit_summary(rows: &[SchemeSummary], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), render_summary(rows).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(path.as_ref(), format!("{json}\n").as_bytes())
    }
}
