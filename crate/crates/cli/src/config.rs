//! Tool configuration, scenario files and the provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use acp_core::compliance::{StiffnessSchedule, DEFAULT_K_HIGH};
use acp_core::labeling::LabelConfig;
use acp_core::signal::StftConfig;
use acp_core::sim::{ControllerSpec, FlipScenario, PolicyKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError, CliResult};

pub const SCENARIO_FORMAT: &str = "acp-scenario";
pub const CONTACT_FORMAT: &str = "acp-contact-model";
const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    /// Hz.
    pub rate: f64,
    /// Moving-average window, seconds.
    pub window: f64,
}

impl Default for LabelSection {
    fn default() -> Self {
        let d = LabelConfig::default();
        Self {
            rate: d.rate,
            window: d.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    /// Only "si" is accepted.
    pub units: String,
    pub schedule: StiffnessSchedule,
    pub k_high: f64,
    /// Replaces every scenario's controller when present.
    pub admittance: Option<ControllerSpec>,
    pub label: LabelSection,
    pub stft: StftConfig,
    /// Scenario file paths, relative to the config file, or `builtin:<name>`.
    pub scenarios: Vec<String>,
    pub policies: Vec<PolicyKind>,
    pub trials: usize,
    pub out_dir: Option<PathBuf>,
    /// Replaces every scenario's seed when present.
    pub seed: Option<u64>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            units: "si".into(),
            schedule: StiffnessSchedule::default(),
            k_high: DEFAULT_K_HIGH,
            admittance: None,
            label: LabelSection::default(),
            stft: StftConfig::default(),
            scenarios: ["nominal", "unstable_fixture", "heavy_item"]
                .iter()
                .map(|s| format!("{BUILTIN_PREFIX}{s}"))
                .collect(),
            policies: PolicyKind::standard_set(),
            trials: 100,
            out_dir: None,
            seed: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    format: String,
    version: u32,
    scenario: FlipScenario,
}

pub fn builtin_scenario(name: &str) -> Option<FlipScenario> {
    match name {
        "nominal" => Some(FlipScenario::nominal()),
        "unstable_fixture" => Some(FlipScenario::unstable_fixture()),
        "heavy_item" => Some(FlipScenario::heavy_item()),
        _ => None,
    }
}

pub fn read_scenario_file(path: &Path) -> CliResult<FlipScenario> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if file.format != SCENARIO_FORMAT || file.version != 1 {
        return Err(CliError::Input(format!(
            "{}: expected format \"{SCENARIO_FORMAT}\" version 1, found \"{}\" version {}",
            path.display(),
            file.format,
            file.version
        )));
    }
    file.scenario.validate()?;
    Ok(file.scenario)
}

pub fn scenario_file_text(scenario: &FlipScenario) -> CliResult<String> {
    let file = ScenarioFile {
        format: SCENARIO_FORMAT.into(),
        version: 1,
        scenario: scenario.clone(),
    };
    toml::to_string(&file).map_err(|e| CliError::Internal(e.to_string()))
}

impl ToolConfig {
    /// Parses and validates; relative scenario paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: ToolConfig = toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        for s in &mut cfg.scenarios {
            if !s.starts_with(BUILTIN_PREFIX) && Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
        if let Some(dir) = &cfg.out_dir {
            if dir.is_relative() {
                cfg.out_dir = Some(base.join(dir));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !self.units.eq_ignore_ascii_case("si") {
            return Err(CliError::Input(format!("units must be \"si\", got \"{}\"", self.units)));
        }
        self.label_config().schedule.validate()?;
        if !(self.k_high > 0.0) {
            return Err(CliError::Input(format!("k_high must be positive, got {}", self.k_high)));
        }
        if !(self.label.rate > 0.0 && self.label.window > 0.0) {
            return Err(CliError::Input("label rate and window must be positive".into()));
        }
        self.stft.validate()?;
        if let Some(a) = &self.admittance {
            a.params()?;
        }
        for p in &self.policies {
            p.validate()?;
        }
        for s in &self.scenarios {
            match s.strip_prefix(BUILTIN_PREFIX) {
                Some(name) if builtin_scenario(name).is_none() => {
                    return Err(CliError::Input(format!("unknown built-in scenario `{name}`")));
                }
                Some(_) => {}
                None if !Path::new(s).is_file() => {
                    return Err(CliError::Input(format!("scenario file {s} does not exist")));
                }
                None => {}
            }
        }
        Ok(())
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            schedule: self.schedule,
            k_high: self.k_high,
            rate: self.label.rate,
            window: self.label.window,
        }
    }

    /// Scenarios with the seed and controller overrides applied.
    pub fn resolve_scenarios(&self) -> CliResult<Vec<FlipScenario>> {
        self.scenarios.iter().map(|s| self.resolve_scenario(s)).collect()
    }

    pub fn resolve_scenario(&self, spec: &str) -> CliResult<FlipScenario> {
        let mut sc = match spec.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => {
                builtin_scenario(name).ok_or_else(|| CliError::Input(format!("unknown built-in scenario `{name}`")))?
            }
            None => read_scenario_file(Path::new(spec))?,
        };
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        if let Some(a) = self.admittance {
            sc.controller = a;
        }
        sc.validate()?;
        Ok(sc)
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            tool: "acp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.hash(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn header_lines(&self) -> Vec<String> {
        let mut v = vec![
            format!("{} {}", self.tool, self.version),
            format!("config sha256 {}", self.config_sha256),
        ];
        if let Some(s) = self.seed {
            v.push(format!("seed {s}"));
        }
        v
    }
}
