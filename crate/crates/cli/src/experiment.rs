//! Runs a validated experiment and writes its artifact files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use ecot_core::identify::conditional_cross_covariance_at;
use ecot_core::{
    build_reference, check_causality, extract_model, joint_distance, kalman_coefficients,
    realize_marginal, run, symlog_transform, CausalityReport, CoefficientSpec, GaussianJoint, Mode,
    Role, SinkhornResult,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{Experiment, OutputLaw, ReferenceModel};

/// Laws shared by every mode of an experiment.
pub struct Problem {
    pub mu: GaussianJoint,
    pub nu: GaussianJoint,
    pub reference: GaussianJoint,
    pub reference_model: CoefficientSpec,
}

pub fn build_problem(exp: &Experiment) -> Result<Problem> {
    let mu = realize_marginal(&exp.mu, Role::Input).context("building mu")?;
    let inputs = match &exp.reference_inputs {
        Some(spec) => realize_marginal(spec, Role::Input).context("building reference_inputs")?,
        None => mu.clone(),
    };
    let reference_model = match &exp.reference {
        ReferenceModel::StateSpace(ss) => kalman_coefficients(ss).context("reference model")?,
        ReferenceModel::Coefficients(c) => c.clone(),
    };
    let reference = build_reference(&reference_model, &inputs).context("building reference")?;
    let nu = match &exp.nu {
        OutputLaw::Law(spec) => realize_marginal(spec, Role::Output).context("building nu")?,
        OutputLaw::FromReference => reference.output_marginal()?,
    };
    Ok(Problem {
        mu,
        nu,
        reference,
        reference_model,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CausalitySummary {
    pub tolerance: f64,
    pub max_violation: f64,
    pub passed: bool,
    pub per_step: Vec<f64>,
}

impl From<CausalityReport> for CausalitySummary {
    fn from(r: CausalityReport) -> Self {
        Self {
            tolerance: r.tolerance,
            max_violation: r.max_violation,
            passed: r.passed,
            per_step: r.per_step,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCovSummary {
    pub tau: f64,
    pub conditioned_steps: usize,
    /// Max |entry| over rows after and columns up to the conditioned steps.
    pub max_anticipating: f64,
    /// Max |entry| over the conditioned rows.
    pub max_conditioned_rows: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub mode: &'static str,
    pub converged: bool,
    pub sweeps: usize,
    pub final_distance: f64,
    pub kl_to_reference: f64,
    pub input_marginal_error: f64,
    pub output_marginal_error: f64,
    pub causality: CausalitySummary,
    pub crosscov: Vec<CrossCovSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub horizon: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub runs: Vec<RunSummary>,
}

impl Report {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(|r| r.converged)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    mode: &'static str,
    total_seconds: f64,
    sweep_seconds: Vec<f64>,
}

pub struct ModeRun {
    pub mode: Mode,
    pub result: SinkhornResult,
    pub summary: RunSummary,
}

/// Number of grid points at or before `tau`.
pub fn conditioned_steps(grid: &[f64], tau: f64) -> usize {
    grid.iter().filter(|&&t| t <= tau + 1e-12).count()
}

pub fn solve_mode(exp: &Experiment, problem: &Problem, mode: Mode) -> Result<ModeRun> {
    let settings = ecot_core::SinkhornSettings {
        mode,
        ..exp.settings
    };
    let result = run(&problem.reference, &problem.mu, &problem.nu, &settings)
        .with_context(|| format!("{} run", mode.name()))?;
    let coupling = &result.coupling;
    let causality = check_causality(coupling, exp.outputs.causality_tol)?;
    let grid = exp.mu.grid_points();
    let mut crosscov = Vec::new();
    for &tau in &exp.outputs.crosscov_tau {
        let k = conditioned_steps(&grid, tau);
        let m = conditional_cross_covariance_at(coupling, k)?;
        let n = m.nrows();
        crosscov.push(CrossCovSummary {
            tau,
            conditioned_steps: k,
            max_anticipating: m.view((k, 0), (n - k, k)).amax(),
            max_conditioned_rows: m.rows(0, k).amax(),
        });
    }
    let summary = RunSummary {
        mode: mode.name(),
        converged: result.converged,
        sweeps: result.sweeps,
        final_distance: result.final_distance(),
        kl_to_reference: result.history.last().map_or(0.0, |h| h.kl_to_reference),
        input_marginal_error: joint_distance(&coupling.input_marginal()?, &problem.mu)?,
        output_marginal_error: joint_distance(&coupling.output_marginal()?, &problem.nu)?,
        causality: causality.into(),
        crosscov,
    };
    Ok(ModeRun {
        mode,
        result,
        summary,
    })
}

fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    let cells: Vec<String> = values.into_iter().map(|v| fmt_value(*v)).collect();
    cells.join(",")
}

/// Mean row, then one row per covariance row.
pub fn coupling_csv(mean: &DVector<f64>, cov: &DMatrix<f64>) -> String {
    let mut out = csv_row(mean.iter());
    out.push('\n');
    for row in cov.row_iter() {
        out.push_str(&csv_row(row.iter()));
        out.push('\n');
    }
    out
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        out.push_str(&csv_row(row.iter()));
        out.push('\n');
    }
    out
}

pub fn history_csv(result: &SinkhornResult) -> String {
    let mut out = String::from("sweep,distance,kl_to_reference\n");
    for h in &result.history {
        let _ = writeln!(
            out,
            "{},{},{}",
            h.sweep,
            fmt_value(h.distance),
            fmt_value(h.kl_to_reference)
        );
    }
    out
}

#[derive(Serialize)]
struct ModelStepJson<'a> {
    t: usize,
    h: &'a [f64],
    f: &'a [f64],
    b: f64,
    eps: f64,
}

#[derive(Serialize)]
struct ModelJson<'a> {
    horizon: usize,
    steps: Vec<ModelStepJson<'a>>,
}

pub fn model_json(model: &CoefficientSpec) -> Result<String> {
    let steps = model
        .steps()
        .iter()
        .enumerate()
        .map(|(i, s)| ModelStepJson {
            t: i + 1,
            h: &s.h,
            f: &s.f,
            b: s.b,
            eps: s.eps,
        })
        .collect();
    let doc = ModelJson {
        horizon: model.horizon(),
        steps,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_mode_artifacts(exp: &Experiment, dir: &Path, run: &ModeRun) -> Result<()> {
    let name = run.mode.name();
    let coupling = &run.result.coupling;
    let outputs = &exp.outputs;
    if outputs.coupling {
        write(
            dir,
            &format!("coupling_{name}.csv"),
            &coupling_csv(coupling.mean(), coupling.cov()),
        )?;
    }
    if outputs.history {
        write(
            dir,
            &format!("history_{name}.csv"),
            &history_csv(&run.result),
        )?;
    }
    if outputs.model {
        let model = extract_model(coupling).with_context(|| format!("{name} model extraction"))?;
        write(dir, &format!("model_{name}.json"), &model_json(&model)?)?;
    }
    let grid = exp.mu.grid_points();
    for &tau in &outputs.crosscov_tau {
        let m = conditional_cross_covariance_at(coupling, conditioned_steps(&grid, tau))?;
        write(
            dir,
            &format!("crosscov_{name}_tau{tau}.csv"),
            &matrix_csv(&m),
        )?;
        let s = symlog_transform(&m, outputs.symlog_linthresh);
        write(
            dir,
            &format!("crosscov_{name}_tau{tau}.symlog.csv"),
            &matrix_csv(&s),
        )?;
    }
    Ok(())
}

fn seconds(d: &Duration) -> f64 {
    d.as_secs_f64()
}

pub struct Outcome {
    pub report: Report,
    pub runs: Vec<ModeRun>,
}

/// Solves every requested mode and writes all artifacts into `out`.
///
/// `report.json` depends only on the configuration; wall-clock times go to
/// `timing.json`.
pub fn run_experiment(exp: &Experiment, modes: &[Mode], out: &Path) -> Result<Outcome> {
    let problem = build_problem(exp)?;
    let shared = &problem;
    let runs: Vec<ModeRun> = std::thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&mode| s.spawn(move || solve_mode(exp, shared, mode)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let reference = &problem.reference;
    write(
        out,
        "reference.csv",
        &coupling_csv(reference.mean(), reference.cov()),
    )?;
    write(
        out,
        "reference_model.json",
        &model_json(&problem.reference_model)?,
    )?;
    for r in &runs {
        write_mode_artifacts(exp, out, r)?;
    }
    let report = Report {
        horizon: exp.horizon,
        tol: exp.settings.tol,
        max_sweeps: exp.settings.max_sweeps,
        runs: runs.iter().map(|r| r.summary.clone()).collect(),
    };
    write(
        out,
        "report.json",
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    let timing: Vec<Timing> = runs
        .iter()
        .map(|r| Timing {
            mode: r.mode.name(),
            total_seconds: r.result.sweep_times.iter().map(seconds).sum(),
            sweep_seconds: r.result.sweep_times.iter().map(seconds).collect(),
        })
        .collect();
    write(
        out,
        "timing.json",
        &(serde_json::to_string_pretty(&timing)? + "\n"),
    )?;
    Ok(Outcome { report, runs })
}
