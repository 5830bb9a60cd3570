//! The `acp` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use acp_core::sim::PolicyKind;
use commands::{cmd_analyze_contact, cmd_compare, cmd_label, cmd_simulate, cmd_spectrogram};
use config::ToolConfig;
use error::{io_error, CliError, CliResult};
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "acp", version, about = "Adaptive compliance toolkit")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "ACP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the seed of every scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file for the primary artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label a demonstration episode.
    Label { episode: PathBuf },
    /// Pinching verdict and escape certificate for a contact model file.
    AnalyzeContact {
        model: PathBuf,
        /// Initial velocity, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v0: Option<Vec<f64>>,
    },
    /// Force/torque spectrogram of the second before `t`.
    Spectrogram {
        episode: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
    /// Run seeded flipping trials and print one record per trial.
    Simulate {
        /// Scenario file or `builtin:<name>`; defaults to the configured list.
        #[arg(long)]
        scenario: Vec<String>,
        /// stiff, compliant or adaptive; defaults to the configured list.
        #[arg(long)]
        policy: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
        /// Directory for per-trial episode files.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Success-rate table over the configured scenarios and policies.
    ComparePolicies {
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Output produced by a run: text for stdout, plus files already written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub stdout: String,
}

fn load_config(cli: &Cli) -> CliResult<ToolConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ToolConfig::load(p)?,
        None => ToolConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: String) -> CliResult<String> {
    match out {
        Some(p) => {
            fs::write(p, text).map_err(|e| io_error(p, e))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn select_policies(cfg: &ToolConfig, names: &[String]) -> CliResult<Vec<PolicyKind>> {
    if names.is_empty() {
        return Ok(cfg.policies.clone());
    }
    names
        .iter()
        .map(|n| {
            cfg.policies
                .iter()
                .chain(PolicyKind::standard_set().iter())
                .find(|p| p.name() == n)
                .copied()
                .ok_or_else(|| CliError::Input(format!("unknown policy `{n}`")))
        })
        .collect()
}

pub fn run(cli: &Cli) -> CliResult<RunOutput> {
    let cfg = load_config(cli)?;
    let prov = cfg.provenance();
    let out = cli.out.as_deref();
    let stdout = match &cli.command {
        Command::Label { episode } => {
            let r = cmd_label(episode, out, &cfg)?;
            output::render_label(&r, &prov, cli.format)?
        }
        Command::AnalyzeContact { model, v0 } => {
            let r = cmd_analyze_contact(model, v0.clone())?;
            emit(out, output::render_contact(&r, &prov, cli.format)?)?
        }
        Command::Spectrogram { episode, t } => {
            let s = cmd_spectrogram(episode, *t, &cfg)?;
            let doc = output::spectrogram_json(&s, *t, &prov)?;
            match out {
                Some(p) => {
                    emit(Some(p), doc)?;
                    let [c, f, b] = s.shape();
                    format!("spectrogram {c}x{f}x{b} written to {}\n", p.display())
                }
                None => doc,
            }
        }
        Command::Simulate {
            scenario,
            policy,
            trials,
            dump,
        } => {
            let scenarios = if scenario.is_empty() {
                cfg.resolve_scenarios()?
            } else {
                scenario
                    .iter()
                    .map(|s| cfg.resolve_scenario(s))
                    .collect::<CliResult<_>>()?
            };
            let policies = select_policies(&cfg, policy)?;
            let r = cmd_simulate(&scenarios, &policies, trials.unwrap_or(cfg.trials), dump.as_deref())?;
            let records = output::render_trials(&r.trials, &prov)?;
            let table = r.report.table();
            match (out, cli.format) {
                (Some(p), _) => {
                    emit(Some(p), records)?;
                    table
                }
                (None, Format::Records) => records,
                (None, Format::Text) => records + &table,
            }
        }
        Command::ComparePolicies { trials } => {
            let report = cmd_compare(&cfg, *trials)?;
            let artifact = output::benchmark_artifact(&report, &prov, cli.format)?;
            if let Some(p) = out {
                let trials_path = p.with_extension("trials.jsonl");
                emit(Some(&trials_path), output::render_trials(&report.trials, &prov)?)?;
            }
            emit(out, artifact)?
        }
    };
    Ok(RunOutput { stdout })
}
