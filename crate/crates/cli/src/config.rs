//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use beamsolve_core::{KappaMode, ReferenceRunConfig, SafeParams, SystemConfig, UnfoldParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "BEAMSOLVE_SEED";

const DEFAULT_NUM_CHANNELS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Reference,
    Algorithm1,
    Algorithm2,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Reference => "reference",
            Engine::Algorithm1 => "algorithm1",
            Engine::Algorithm2 => "algorithm2",
        }
    }
}

/// Step sizes of the safe solver.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StepPolicy {
    /// Largest steps covered by the monotonicity guarantee.
    #[default]
    Theorem,
    Fixed { gamma_u: f64, gamma_v: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    #[serde(rename = "L")]
    pub iterations: Option<usize>,
    #[serde(rename = "J_u")]
    pub j_u: Option<usize>,
    #[serde(rename = "J_w")]
    pub j_w: Option<usize>,
    #[serde(rename = "J_v")]
    pub j_v: Option<usize>,
    pub wsr_tol: Option<f64>,
    #[serde(default)]
    pub step_policy: StepPolicy,
    #[serde(default)]
    pub kappa_mode: KappaMode,
    #[serde(default)]
    pub phi_u: Vec<Vec<f64>>,
    #[serde(default)]
    pub phi_v: Vec<Vec<f64>>,
    #[serde(default)]
    pub theta_u: Vec<Vec<f64>>,
    #[serde(default)]
    pub theta_v: Vec<Vec<f64>>,
    #[serde(default)]
    pub xi_u: Vec<Vec<f64>>,
    #[serde(default)]
    pub xi_v: Vec<Vec<f64>>,
    #[serde(default)]
    pub diagnostics: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Trace CSV; relative paths resolve against the config file's directory.
    pub csv: Option<PathBuf>,
    /// Summary JSON; resolved like `csv`.
    pub json: Option<PathBuf>,
    /// Fill the `wall_nanos` column. Off by default so traces are reproducible.
    #[serde(default)]
    pub timing_in_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the config file stem.
    #[serde(default)]
    pub run_id: Option<String>,
    pub scenario: SystemConfig,
    pub seed: u64,
    #[serde(default = "default_num_channels")]
    pub num_channels: usize,
    pub engine: Engine,
    #[serde(default)]
    pub engine_params: EngineParams,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_num_channels() -> usize {
    DEFAULT_NUM_CHANNELS
}

/// Engine settings after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum EngineSetup {
    Reference(ReferenceRunConfig),
    Algorithm1(SafeParams, StepPolicy),
    Algorithm2(UnfoldParams),
}

impl EngineSetup {
    /// Outer iteration count `L`.
    pub fn iterations(&self) -> usize {
        match self {
            EngineSetup::Reference(r) => r.max_iters,
            EngineSetup::Algorithm1(p, _) => p.iterations,
            EngineSetup::Algorithm2(p) => p.layers,
        }
    }
}

impl ExperimentConfig {
    pub fn run_id(&self) -> &str {
        self.run_id.as_deref().unwrap_or("run")
    }

    /// Checks everything except the output paths and builds the engine settings.
    pub fn engine_setup(&self) -> Result<EngineSetup, (&'static str, String)> {
        self.scenario.validate().map_err(|e| ("scenario", e.to_string()))?;
        if self.num_channels == 0 {
            return Err(("num_channels", "num_channels must be at least 1".into()));
        }
        let p = &self.engine_params;
        let field = "engine_params";
        let iterations = p.iterations.ok_or((field, "engine_params.L is required".to_string()))?;
        let need = |v: Option<usize>, name: &str| -> Result<usize, (&'static str, String)> {
            match v {
                Some(0) => Err((field, format!("engine_params.{name} must be at least 1"))),
                Some(x) => Ok(x),
                None => Err((field, format!("engine_params.{name} is required for engine {}", self.engine.as_str()))),
            }
        };
        let setup = match self.engine {
            Engine::Reference => {
                let mut run = ReferenceRunConfig::new(iterations);
                if let Some(tol) = p.wsr_tol {
                    run.wsr_tol = tol;
                }
                run.validate().map_err(|e| (field, e.to_string()))?;
                EngineSetup::Reference(run)
            }
            Engine::Algorithm1 => {
                if iterations == 0 {
                    return Err((field, "engine_params.L must be at least 1".into()));
                }
                if let StepPolicy::Fixed { gamma_u, gamma_v } = p.step_policy {
                    if !(gamma_u > 0.0 && gamma_v > 0.0 && gamma_u.is_finite() && gamma_v.is_finite()) {
                        return Err((field, "fixed step sizes must be positive and finite".into()));
                    }
                }
                let params = SafeParams {
                    iterations,
                    j_u: need(p.j_u, "J_u")?,
                    j_w: need(p.j_w, "J_w")?,
                    j_v: need(p.j_v, "J_v")?,
                };
                EngineSetup::Algorithm1(params, p.step_policy)
            }
            Engine::Algorithm2 => {
                let mut params = UnfoldParams {
                    layers: iterations,
                    j_u: need(p.j_u, "J_u")?,
                    j_w: need(p.j_w, "J_w")?,
                    j_v: need(p.j_v, "J_v")?,
                    phi_u: p.phi_u.clone(),
                    phi_v: p.phi_v.clone(),
                    theta_u: p.theta_u.clone(),
                    theta_v: p.theta_v.clone(),
                    xi_u: p.xi_u.clone(),
                    xi_v: p.xi_v.clone(),
                };
                params.fill_defaults();
                params.validate().map_err(|e| (field, e.to_string()))?;
                EngineSetup::Algorithm2(params)
            }
        };
        Ok(setup)
    }
}

/// 1-based line of the first occurrence of `"key"`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map_or(1, |i| i + 1)
}

/// Parses and validates a config. `seed_override` replaces the seed.
pub fn parse_config(text: &str, path: &Path, seed_override: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let invalid = |line: usize, message: String| CliError::Config { path: path.to_path_buf(), line, message };
    let mut config: ExperimentConfig = serde_json::from_str(text).map_err(|e| invalid(e.line().max(1), e.to_string()))?;
    if let Some(raw) = seed_override {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| invalid(line_of(text, "seed"), format!("{SEED_ENV}={raw:?} is not a 64-bit unsigned integer")))?;
    }
    config.scenario = config
        .scenario
        .clone()
        .validated()
        .map_err(|e| invalid(line_of(text, "scenario"), e.to_string()))?;
    if config.run_id.is_none() {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        config.run_id = Some(stem.unwrap_or_else(|| "run".into()));
    }
    config.engine_setup().map_err(|(key, message)| invalid(line_of(text, key), message))?;

    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut config.output.csv, &mut config.output.json].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        if p == path {
            return Err(invalid(line_of(text, "output"), "output would overwrite the config file".into()));
        }
    }
    Ok(config)
}

/// Reads a config file, honoring [`SEED_ENV`].
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let seed = std::env::var(SEED_ENV).ok();
    parse_config(&text, path, seed.as_deref())
}
