use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ecot_cli::config::ModeSelection;
use ecot_cli::{
    diff_artifacts, load_config, load_preset, run_experiment, ExperimentConfig, EXIT_DIFFERS,
    EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK,
};

#[derive(Parser)]
#[command(
    name = "ecot",
    version,
    about = "Entropic causal optimal transport between Gaussian processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Causal,
    Noncausal,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    #[value(name = "paper_fig1")]
    PaperFig1,
    Trivial,
    Smoke4,
}

impl PresetArg {
    fn name(self) -> &'static str {
        match self {
            PresetArg::PaperFig1 => "paper_fig1",
            PresetArg::Trivial => "trivial",
            PresetArg::Smoke4 => "smoke4",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve an experiment and write its artifacts.
    Solve {
        /// Configuration file (JSON).
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "./results")]
        out: PathBuf,
        /// Overrides `settings.mode` of the configuration.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Use a bundled configuration instead of a file.
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Compare two artifact files or result directories.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        tol: f64,
    },
    /// Validate a configuration without solving.
    Check { config: PathBuf },
}

fn read_config(config: Option<&Path>, preset: Option<PresetArg>) -> Result<ExperimentConfig> {
    Ok(match (config, preset) {
        (_, Some(p)) => load_preset(p.name())?,
        (Some(path), None) => load_config(path)?,
        (None, None) => bail!("either a config file or --preset is required"),
    })
}

fn solve(
    config: Option<&Path>,
    out: &Path,
    mode: Option<ModeArg>,
    preset: Option<PresetArg>,
) -> Result<i32> {
    let mut cfg = read_config(config, preset)?;
    if let Some(m) = mode {
        cfg.settings.mode = match m {
            ModeArg::Causal => ModeSelection::Causal,
            ModeArg::Noncausal => ModeSelection::Noncausal,
            ModeArg::Both => ModeSelection::Both,
        };
    }
    let exp = cfg.validate()?;
    let outcome = run_experiment(&exp, &exp.modes, out)?;
    for r in &outcome.report.runs {
        println!(
            "{:<9} converged={} sweeps={} distance={:.3e} kl={:.6e} causality_max={:.3e} ({})",
            r.mode,
            r.converged,
            r.sweeps,
            r.final_distance,
            r.kl_to_reference,
            r.causality.max_violation,
            if r.causality.passed {
                "causal"
            } else {
                "not causal"
            },
        );
    }
    println!("artifacts written to {}", out.display());
    Ok(if outcome.report.all_converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn diff(a: &Path, b: &Path, tol: f64) -> Result<i32> {
    if tol.is_nan() || tol < 0.0 {
        bail!("--tol must be non-negative");
    }
    let report = diff_artifacts(a, b, tol)?;
    for f in &report.files {
        println!(
            "{} max_abs={:e} {}",
            f.name,
            f.max_abs,
            if f.passed { "PASS" } else { "FAIL" }
        );
    }
    println!("max_abs={:e} tol={:e}", report.max_abs(), tol);
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_DIFFERS
    })
}

fn check(config: &Path) -> Result<i32> {
    let exp = load_config(config)?.validate()?;
    println!(
        "ok: horizon {}, modes {}",
        exp.horizon,
        exp.modes
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve {
            config,
            out,
            mode,
            preset,
        } => solve(config.as_deref(), out, *mode, *preset),
        Command::Diff { a, b, tol } => diff(a, b, *tol),
        Command::Check { config } => check(config),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
