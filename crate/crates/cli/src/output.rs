//! Text and line-delimited JSON rendering, all prefixed by provenance.

use std::fmt::Write as _;

use acp_core::signal::SpectrogramTensor;
use acp_core::sim::{BenchmarkReport, TrialSummary};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{ContactReport, LabelRun};
use crate::config::Provenance;
use crate::error::CliResult;

pub const BENCHMARK_MAGIC: &str = "ACP-BENCHMARK";
pub const SPECTROGRAM_FORMAT: &str = "acp-spectrogram";
pub const CHANNELS: [&str; 6] = ["fx", "fy", "fz", "tx", "ty", "tz"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    /// One JSON object per line.
    Records,
}

fn header(prov: &Provenance) -> String {
    prov.header_lines().iter().map(|l| format!("# {l}\n")).collect()
}

fn record(kind: &str, body: impl Serialize) -> CliResult<String> {
    let mut v = serde_json::to_value(body)?;
    if let Value::Object(m) = &mut v {
        m.insert("type".into(), kind.into());
    }
    Ok(serde_json::to_string(&v)? + "\n")
}

pub fn render_label(run: &LabelRun, prov: &Provenance, format: Format) -> CliResult<String> {
    let s = &run.summary;
    match format {
        Format::Records => {
            Ok(record("provenance", prov)? + &record("label_summary", json!({ "path": run.path, "summary": s }))?)
        }
        Format::Text => {
            let mut out = header(prov);
            let _ = writeln!(out, "labels written to {}", run.path.display());
            let _ = writeln!(out, "steps: {}", s.steps);
            let _ = writeln!(out, "contact steps: {} ({:.1}%)", s.contact_steps, s.contact_percent);
            let _ = writeln!(out, "k_low histogram:");
            for b in &s.k_low_histogram {
                let _ = writeln!(out, "  [{:>8.1}, {:>8.1}] {}", b.lo, b.hi, b.count);
            }
            Ok(out)
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn render_contact(r: &ContactReport, prov: &Provenance, format: Format) -> CliResult<String> {
    match format {
        Format::Records => Ok(record("provenance", prov)? + &record("contact_report", r)?),
        Format::Text => {
            let mut out = header(prov);
            let _ = writeln!(out, "contacts: {}  dimension: {}", r.contacts, r.dim);
            let _ = writeln!(out, "pinching: {}", r.pinching);
            let _ = writeln!(out, "min gram entry: {:.6}", r.gram_min);
            let _ = writeln!(out, "J^T lambda: {}", fmt_vec(&r.generalized_force));
            match &r.escape {
                Some(e) => {
                    let _ = writeln!(out, "v0: {}", fmt_vec(&e.v0));
                    let _ = writeln!(out, "escape k: {:.9}", e.k);
                    let _ = writeln!(out, "escape v: {}", fmt_vec(&e.v));
                }
                None => {
                    let _ = writeln!(out, "escape: none, contacts pinch");
                }
            }
            Ok(out)
        }
    }
}

/// Self-describing JSON array file with axis metadata.
pub fn spectrogram_json(s: &SpectrogramTensor, t_now: f64, prov: &Provenance) -> CliResult<String> {
    let data: Vec<Vec<Vec<f64>>> = (0..s.channels)
        .map(|c| (0..s.frames).map(|f| s.frame(c, f).to_vec()).collect())
        .collect();
    let frame_times: Vec<f64> = (0..s.frames).map(|f| s.t_start + f as f64 * s.frame_dt).collect();
    let doc = json!({
        "format": SPECTROGRAM_FORMAT,
        "version": 1,
        "provenance": prov,
        "t_now": t_now,
        "value": if s.log_magnitude { "ln(1+|X|)" } else { "|X|" },
        "shape": s.shape(),
        "axes": [
            { "name": "channel", "size": s.channels, "labels": &CHANNELS[..s.channels.min(6)] },
            { "name": "frame", "size": s.frames, "unit": "s", "start": frame_times },
            { "name": "bin", "size": s.bins, "unit": "Hz", "spacing": s.bin_hz },
        ],
        "data": data,
    });
    Ok(serde_json::to_string(&doc)? + "\n")
}

pub fn render_trials(trials: &[TrialSummary], prov: &Provenance) -> CliResult<String> {
    let mut out = record("provenance", prov)?;
    for t in trials {
        out += &record("trial", t)?;
    }
    Ok(out)
}

/// Benchmark table artifact: magic line, provenance, success table, then
/// one line per cell with status counts.
pub fn benchmark_artifact(report: &BenchmarkReport, prov: &Provenance, format: Format) -> CliResult<String> {
    match format {
        Format::Records => {
            let mut out = record("provenance", prov)?;
            for c in &report.cells {
                out += &record("cell", c)?;
            }
            Ok(out)
        }
        Format::Text => {
            let mut out = format!("{BENCHMARK_MAGIC} 1\n") + &header(prov);
            out += &report.table();
            out.push('\n');
            for c in &report.cells {
                let counts: Vec<String> = c.status_counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(
                    out,
                    "{} / {}: {}/{} success, mean max force {:.3} N, {}",
                    c.policy,
                    c.scenario,
                    c.successes,
                    c.trials,
                    c.mean_max_force,
                    counts.join(" ")
                );
            }
            Ok(out)
        }
    }
}
