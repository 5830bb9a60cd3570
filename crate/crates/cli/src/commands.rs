//! Subcommand bodies. Each returns a structured result; rendering lives in
//! `output`.

use std::fs;
use std::path::{Path, PathBuf};

use acp_core::contact::{ContactModel, DEFAULT_TOL};
use acp_core::episode::Episode;
use acp_core::labeling::{label_episode, write_labels, ActionLabel};
use acp_core::signal::{spectrogram, SpectrogramTensor};
use acp_core::sim::{
    run_benchmark, run_trial, trial_seed, BenchmarkReport, FlipScenario, PolicyKind, TrialOptions, TrialSummary,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{ToolConfig, CONTACT_FORMAT};
use crate::error::{io_error, CliError, CliResult};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub steps: usize,
    pub contact_steps: usize,
    pub contact_percent: f64,
    pub k_low_histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRun {
    pub labels: Vec<ActionLabel>,
    pub summary: LabelSummary,
    pub path: PathBuf,
}

/// Equal-width bins over `[lo, hi]`; values outside land in the end bins.
pub fn histogram(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<HistogramBin> {
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: lo + width * i as f64,
            hi: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for v in values {
        let i = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
        let i = (i.max(0.0) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

pub fn summarize_labels(labels: &[ActionLabel], cfg: &ToolConfig) -> LabelSummary {
    let contact_steps = labels.iter().filter(|l| l.is_contact()).count();
    let hi = cfg.k_high.max(cfg.schedule.k_max);
    LabelSummary {
        steps: labels.len(),
        contact_steps,
        contact_percent: if labels.is_empty() {
            0.0
        } else {
            100.0 * contact_steps as f64 / labels.len() as f64
        },
        k_low_histogram: histogram(labels.iter().map(|l| l.k_low), cfg.schedule.k_min, hi, HISTOGRAM_BINS),
    }
}

/// Default label path: `<out_dir>/<stem>.labels`, or next to the episode.
pub fn default_label_path(episode_path: &Path, cfg: &ToolConfig) -> PathBuf {
    let stem = episode_path.file_stem().unwrap_or_default();
    let name = format!("{}.labels", stem.to_string_lossy());
    match &cfg.out_dir {
        Some(d) => d.join(name),
        None => episode_path.with_file_name(name),
    }
}

fn write_file(path: &Path, data: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, data).map_err(|e| io_error(path, e))
}

pub fn cmd_label(episode_path: &Path, out: Option<&Path>, cfg: &ToolConfig) -> CliResult<LabelRun> {
    let episode =
        Episode::read(episode_path).map_err(|e| CliError::Input(format!("{}: {e}", episode_path.display())))?;
    let labels = label_episode(&episode, &cfg.label_config())?;
    let path = out.map_or_else(|| default_label_path(episode_path, cfg), Path::to_path_buf);
    let mut header = cfg.provenance().header_lines();
    header.push(format!("episode {}", episode_path.display()));
    write_file(&path, write_labels(&labels, &header).as_bytes())?;
    let summary = summarize_labels(&labels, cfg);
    Ok(LabelRun { labels, summary, path })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactFile {
    format: String,
    version: u32,
    jacobian: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    #[serde(default)]
    v0: Option<Vec<f64>>,
    #[serde(default)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub v0: Vec<f64>,
    pub k: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub contacts: usize,
    pub dim: usize,
    pub tol: f64,
    pub pinching: bool,
    /// Smallest entry of `J Jᵀ`.
    pub gram_min: f64,
    pub generalized_force: Vec<f64>,
    /// Absent when the contacts pinch.
    pub escape: Option<EscapeReport>,
}

pub fn parse_contact_model(text: &str) -> CliResult<(ContactModel, Option<Vec<f64>>, f64)> {
    let file: ContactFile = toml::from_str(text).map_err(|e| CliError::Input(format!("contact model: {e}")))?;
    if file.format != CONTACT_FORMAT || file.version != 1 {
        return Err(CliError::Input(format!(
            "contact model: expected format \"{CONTACT_FORMAT}\" version 1, found \"{}\" version {}",
            file.format, file.version
        )));
    }
    let model = ContactModel::from_rows(&file.jacobian, &file.lambda)?;
    Ok((model, file.v0, file.tol.unwrap_or(DEFAULT_TOL)))
}

/// Verdict, `Jᵀλ` and, for non-pinching contacts, the escape certificate.
/// A non-positive contact force is an assumption violation.
pub fn cmd_analyze_contact(model_path: &Path, v0: Option<Vec<f64>>) -> CliResult<ContactReport> {
    let text = fs::read_to_string(model_path).map_err(|e| io_error(model_path, e))?;
    let (model, file_v0, tol) = parse_contact_model(&text)?;
    if let Some(i) = model.lambda().iter().position(|l| !(*l > 0.0)) {
        return Err(CliError::Assumption(format!(
            "contact {i} has force {}; every contact must push",
            model.lambda()[i]
        )));
    }
    let v0 = v0.or(file_v0).unwrap_or_else(|| vec![0.0; model.dim()]);
    if v0.len() != model.dim() {
        return Err(CliError::Input(format!(
            "v0 has {} entries, model dimension is {}",
            v0.len(),
            model.dim()
        )));
    }
    let pinching = model.is_pinching(tol);
    let escape = if pinching {
        None
    } else {
        let cert = model.escape_velocity(&DVector::from_column_slice(&v0), tol)?;
        Some(EscapeReport {
            v0,
            k: cert.k,
            v: cert.v.iter().copied().collect(),
        })
    };
    Ok(ContactReport {
        contacts: model.contacts(),
        dim: model.dim(),
        tol,
        pinching,
        gram_min: model.gram().min(),
        generalized_force: model.generalized_force().iter().copied().collect(),
        escape,
    })
}

pub fn cmd_spectrogram(episode_path: &Path, t: f64, cfg: &ToolConfig) -> CliResult<SpectrogramTensor> {
    let episode =
        Episode::read(episode_path).map_err(|e| CliError::Input(format!("{}: {e}", episode_path.display())))?;
    Ok(spectrogram(episode.wrenches(), t, &cfg.stft)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateRun {
    pub trials: Vec<TrialSummary>,
    pub report: BenchmarkReport,
    pub dumped: Vec<PathBuf>,
}

/// Runs `trials` paired trials per (policy, scenario), optionally writing each
/// trajectory as an episode file into `dump`.
pub fn cmd_simulate(
    scenarios: &[FlipScenario],
    policies: &[PolicyKind],
    trials: usize,
    dump: Option<&Path>,
) -> CliResult<SimulateRun> {
    if trials == 0 {
        return Err(CliError::Input("trials must be at least 1".into()));
    }
    let options = TrialOptions {
        record: dump.is_some(),
        ..Default::default()
    };
    let mut all = Vec::new();
    let mut dumped = Vec::new();
    for policy in policies {
        for sc in scenarios {
            for trial in 0..trials {
                let out = run_trial(sc, policy, trial_seed(sc.seed, trial), trial, options)?;
                if let Some(dir) = dump {
                    let path = dir.join(format!("{}_{}_{trial:04}.acpe", sc.name, policy.name()));
                    write_file(&path, &out.to_episode(sc)?.to_binary())?;
                    dumped.push(path);
                }
                all.push(out.summary);
            }
        }
    }
    let report = summarize_trials(scenarios, policies, trials, all.clone());
    Ok(SimulateRun {
        trials: all,
        report,
        dumped,
    })
}

fn summarize_trials(
    scenarios: &[FlipScenario],
    policies: &[PolicyKind],
    trials: usize,
    all: Vec<TrialSummary>,
) -> BenchmarkReport {
    use acp_core::sim::{CellSummary, SimStatus};
    use std::collections::BTreeMap;
    let mut cells = Vec::new();
    for p in policies {
        for sc in scenarios {
            let of: Vec<&TrialSummary> = all
                .iter()
                .filter(|t| t.policy == p.name() && t.scenario == sc.name)
                .collect();
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for t in &of {
                *counts.entry(t.status.as_str().into()).or_default() += 1;
            }
            let successes = of.iter().filter(|t| t.status == SimStatus::Success).count();
            cells.push(CellSummary {
                policy: p.name().into(),
                scenario: sc.name.clone(),
                trials,
                successes,
                success_rate: 100.0 * successes as f64 / trials as f64,
                status_counts: counts,
                mean_max_force: of.iter().map(|t| t.max_force).sum::<f64>() / trials as f64,
            });
        }
    }
    BenchmarkReport { cells, trials: all }
}

pub fn cmd_compare(cfg: &ToolConfig, trials: Option<usize>) -> CliResult<BenchmarkReport> {
    let scenarios = cfg.resolve_scenarios()?;
    if scenarios.is_empty() || cfg.policies.is_empty() {
        return Err(CliError::Input("need at least one scenario and one policy".into()));
    }
    Ok(run_benchmark(&scenarios, &cfg.policies, trials.unwrap_or(cfg.trials))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins_cover_range() {
        let h = histogram([50.0, 50.0, 2000.0, 1000.0, -1.0, 1e9], 50.0, 2000.0, 10);
        assert_eq!(h.len(), 10);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 6);
        assert_eq!(h[0].count, 3);
        assert_eq!(h[9].count, 2);
        assert_eq!(h[9].hi, 2000.0);
    }

    #[test]
    fn contact_model_parsing() {
        let ok = "format = \"acp-contact-model\"\nversion = 1\njacobian = [[1.0, 0.0]]\nlambda = [2.0]\n";
        let (m, v0, tol) = parse_contact_model(ok).unwrap();
        assert_eq!(m.contacts(), 1);
        assert!(v0.is_none());
        assert_eq!(tol, DEFAULT_TOL);
        let bad = ok.replace("acp-contact-model", "x");
        assert!(parse_contact_model(&bad).is_err());
        let ragged = ok
            .replace("[[1.0, 0.0]]", "[[1.0, 0.0], [1.0]]")
            .replace("[2.0]", "[1.0, 1.0]");
        assert!(parse_contact_model(&ragged).is_err());
    }
}
