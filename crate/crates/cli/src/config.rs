//! Experiment configuration: JSON schema, defaults and validation.

use std::path::Path;

use ecot_core::reference::{Grid, KernelSpec, MeanSpec};
use ecot_core::{CoefficientSpec, MarginalSpec, Mode, ModelStep, SinkhornSettings, StateSpaceSpec};
use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at `{key}` (line {line}, column {column}): {message}")]
    Parse {
        key: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GridConfig {
    Named(GridName),
    Points(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum GridName {
    Uniform,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MeanConfig {
    Constant(f64),
    PerStep(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Exponential { sigma: f64 },
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub mean: MeanConfig,
    pub kernel: KernelConfig,
}

/// A marginal law, or `"reference"` for the reference coupling's own
/// marginal of the same role.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MarginalConfig {
    FromReference(FromReference),
    Law(LawConfig),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum FromReference {
    Reference,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceConfig {
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default, rename = "P0")]
    pub p0: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub h: Vec<f64>,
    #[serde(default)]
    pub f: Vec<f64>,
    #[serde(default)]
    pub b: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    StateSpace(StateSpaceConfig),
    Coefficients(Vec<StepConfig>),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Causal,
    Noncausal,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelection::Causal => vec![Mode::Causal],
            ModeSelection::Noncausal => vec![Mode::NonCausal],
            ModeSelection::Both => vec![Mode::Causal, Mode::NonCausal],
        }
    }
}

fn default_tol() -> f64 {
    1e-6
}
fn default_max_sweeps() -> usize {
    500
}
fn default_delta_floor() -> f64 {
    1e-14
}
fn default_mode() -> ModeSelection {
    ModeSelection::Causal
}
fn default_true() -> bool {
    true
}
fn default_linthresh() -> f64 {
    1e-6
}
fn default_causality_tol() -> f64 {
    ecot_core::identify::CAUSALITY_TOL
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SettingsConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_mode")]
    pub mode: ModeSelection,
    #[serde(default = "default_delta_floor")]
    pub delta_floor: f64,
}

impl Default for SettingsConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_sweeps: default_max_sweeps(),
            mode: default_mode(),
            delta_floor: default_delta_floor(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_true")]
    pub coupling: bool,
    #[serde(default = "default_true")]
    pub history: bool,
    #[serde(default = "default_true")]
    pub model: bool,
    #[serde(default)]
    pub crosscov_tau: Vec<f64>,
    #[serde(default = "default_linthresh")]
    pub symlog_linthresh: f64,
    #[serde(default = "default_causality_tol")]
    pub causality_tol: f64,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            coupling: true,
            history: true,
            model: true,
            crosscov_tau: Vec::new(),
            symlog_linthresh: default_linthresh(),
            causality_tol: default_causality_tol(),
        }
    }
}

/// Raw configuration as read from JSON.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    pub mu: LawConfig,
    pub nu: MarginalConfig,
    pub reference: ReferenceConfig,
    /// Input law of the reference coupling; `mu` when absent.
    #[serde(default)]
    pub reference_inputs: Option<LawConfig>,
    #[serde(default)]
    pub settings: SettingsConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

fn default_grid() -> GridConfig {
    GridConfig::Named(GridName::Uniform)
}

pub enum ReferenceModel {
    StateSpace(StateSpaceSpec),
    Coefficients(CoefficientSpec),
}

pub enum OutputLaw {
    Law(MarginalSpec),
    FromReference,
}

/// Validated configuration.
pub struct Experiment {
    pub horizon: usize,
    pub mu: MarginalSpec,
    pub nu: OutputLaw,
    pub reference: ReferenceModel,
    pub reference_inputs: Option<MarginalSpec>,
    pub settings: SinkhornSettings,
    pub modes: Vec<Mode>,
    pub outputs: OutputsConfig,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: Result<ExperimentConfig, _> = serde_path_to_error::deserialize(de);
    parsed.map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            key,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Experiment, ConfigError> {
        let n = self.horizon;
        if n == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        let grid = match &self.grid {
            GridConfig::Named(GridName::Uniform) => Grid::Uniform,
            GridConfig::Points(p) => {
                if p.len() != n {
                    return Err(invalid(format!(
                        "grid has {} points, horizon is {n}",
                        p.len()
                    )));
                }
                if p.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("grid points must be strictly increasing"));
                }
                Grid::Explicit(p.clone())
            }
        };
        let mu = law("mu", &self.mu, n, &grid)?;
        let nu = match &self.nu {
            MarginalConfig::FromReference(_) => OutputLaw::FromReference,
            MarginalConfig::Law(l) => OutputLaw::Law(law("nu", l, n, &grid)?),
        };
        let reference_inputs = self
            .reference_inputs
            .as_ref()
            .map(|l| law("reference_inputs", l, n, &grid))
            .transpose()?;
        let reference = match &self.reference {
            ReferenceConfig::StateSpace(s) => {
                let ss = StateSpaceSpec {
                    transition: s.f,
                    input_gain: s.b,
                    process_var: s.q,
                    output_gain: s.h,
                    noise_var: s.r,
                    initial_mean: s.x0,
                    initial_var: s.p0,
                    horizon: n,
                };
                ss.validate()
                    .map_err(|e| invalid(format!("reference.state_space: {e}")))?;
                ReferenceModel::StateSpace(ss)
            }
            ReferenceConfig::Coefficients(steps) => {
                if steps.len() != n {
                    return Err(invalid(format!(
                        "reference.coefficients has {} steps, horizon is {n}",
                        steps.len()
                    )));
                }
                let steps = steps
                    .iter()
                    .map(|s| ModelStep {
                        h: s.h.clone(),
                        f: s.f.clone(),
                        b: s.b,
                        eps: s.eps,
                    })
                    .collect();
                let spec = CoefficientSpec::new(steps)
                    .map_err(|e| invalid(format!("reference.coefficients: {e}")))?;
                ReferenceModel::Coefficients(spec)
            }
        };
        let s = &self.settings;
        let settings = SinkhornSettings {
            tol: s.tol,
            max_sweeps: s.max_sweeps,
            mode: Mode::Causal,
            delta_floor: s.delta_floor,
        };
        settings
            .validate()
            .map_err(|e| invalid(format!("settings: {e}")))?;
        let o = &self.outputs;
        if let Some(tau) = o.crosscov_tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(invalid(format!(
                "outputs.crosscov_tau: {tau} is not in (0, 1)"
            )));
        }
        if !(o.symlog_linthresh > 0.0) {
            return Err(invalid("outputs.symlog_linthresh must be positive"));
        }
        if !(o.causality_tol > 0.0) {
            return Err(invalid("outputs.causality_tol must be positive"));
        }
        Ok(Experiment {
            horizon: n,
            mu,
            nu,
            reference,
            reference_inputs,
            settings,
            modes: s.mode.modes(),
            outputs: o.clone(),
        })
    }
}

fn law(name: &str, cfg: &LawConfig, n: usize, grid: &Grid) -> Result<MarginalSpec, ConfigError> {
    let mean = match &cfg.mean {
        MeanConfig::Constant(c) => MeanSpec::Constant(*c),
        MeanConfig::PerStep(v) if v.len() == n => MeanSpec::PerStep(v.clone()),
        MeanConfig::PerStep(v) => {
            return Err(invalid(format!(
                "{name}.mean has {} entries, horizon is {n}",
                v.len()
            )))
        }
    };
    let kernel = match &cfg.kernel {
        KernelConfig::Exponential { sigma } => {
            if !(*sigma > 0.0) {
                return Err(invalid(format!(
                    "{name}.kernel.exponential.sigma must be positive"
                )));
            }
            KernelSpec::Exponential { sigma: *sigma }
        }
        KernelConfig::Matrix(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(invalid(format!("{name}.kernel.matrix must be {n} x {n}")));
            }
            KernelSpec::Matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        }
    };
    Ok(MarginalSpec {
        horizon: n,
        grid: grid.clone(),
        mean,
        kernel,
    })
}
