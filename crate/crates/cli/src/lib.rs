//! Experiment harness for the `ecot` solver: configuration loading, bundled
//! presets, artifact emission and artifact comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diff;
pub mod experiment;

pub use config::{load_config, parse_config, ConfigError, Experiment, ExperimentConfig};
pub use diff::{diff_artifacts, DiffError, DiffReport};
pub use experiment::{run_experiment, Outcome, Report};

pub const PRESET_NAMES: [&str; 3] = ["paper_fig1", "trivial", "smoke4"];

/// JSON text of a bundled preset.
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "paper_fig1" => Some(include_str!("../presets/paper_fig1.json")),
        "trivial" => Some(include_str!("../presets/trivial.json")),
        "smoke4" => Some(include_str!("../presets/smoke4.json")),
        _ => None,
    }
}

pub fn load_preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = preset(name).ok_or_else(|| {
        ConfigError::Validation(format!(
            "unknown preset {name:?}; expected one of {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    parse_config(text)
}

/// Exit code of `solve`: every run converged.
pub const EXIT_OK: i32 = 0;
/// Exit code of any command that failed with an error.
pub const EXIT_ERROR: i32 = 1;
/// Exit code of `solve` when a run exhausted its sweeps.
pub const EXIT_NOT_CONVERGED: i32 = 2;
/// Exit code of `diff` when some difference exceeds the tolerance.
pub const EXIT_DIFFERS: i32 = 3;
