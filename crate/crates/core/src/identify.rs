//! Post-processing of a coupling: input-output model recovery, the causality
//! check and conditional cross-covariance diagnostics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{condition, marginalize, Coord, GaussianJoint};
use crate::reference::{CoefficientSpec, ModelStep};

/// Default tolerance of the causality check.
pub const CAUSALITY_TOL: f64 = 1e-8;

/// Recovers `Y_t = h_t'U_{1:t} + f_t'Y_{1:t-1} + b_t + w_t` by conditioning
/// each output on `(U_{1:t}, Y_{1:t-1})`.
pub fn extract_model(coupling: &GaussianJoint) -> Result<CoefficientSpec> {
    let horizon = coupling.coupling_horizon()?;
    let layout = coupling.layout();
    let mut steps = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let past: Vec<Coord> = (1..=t)
            .map(Coord::input)
            .chain((1..t).map(Coord::output))
            .collect();
        let given = layout.indices(&past)?;
        let target = layout.indices(&[Coord::output(t)])?;
        let c = condition(coupling, &given, &target)?;
        let var = c.cov()[(0, 0)];
        if !(var > 0.0) {
            return Err(Error::SingularConditioningBlock(format!(
                "output {t} is deterministic given its past"
            )));
        }
        let row = c.coeff().row(0);
        steps.push(ModelStep {
            h: row.iter().take(t).copied().collect(),
            f: row.iter().skip(t).copied().collect(),
            b: c.intercept()[0],
            eps: var.sqrt(),
        });
    }
    CoefficientSpec::new(steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalityReport {
    /// `max |Cov(U_{t+1:T}, Y_{1:t} | U_{1:t})|` for `t = 1..T-1`.
    pub per_step: Vec<f64>,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks that past outputs are conditionally independent of future inputs
/// given past inputs, through the conditional cross-covariance.
pub fn check_causality(coupling: &GaussianJoint, tol: f64) -> Result<CausalityReport> {
    let horizon = coupling.coupling_horizon()?;
    let layout = coupling.layout();
    let mut per_step = Vec::with_capacity(horizon.saturating_sub(1));
    for t in 1..horizon {
        let given = layout.indices(&(1..=t).map(Coord::input).collect::<Vec<_>>())?;
        let future_u: Vec<Coord> = (t + 1..=horizon).map(Coord::input).collect();
        let past_y: Vec<Coord> = (1..=t).map(Coord::output).collect();
        let target = layout.indices(&[future_u, past_y].concat())?;
        let c = condition(coupling, &given, &target)?;
        let nf = horizon - t;
        per_step.push(c.cov().view((0, nf), (nf, t)).amax());
    }
    let max_violation = per_step.iter().cloned().fold(0.0, f64::max);
    Ok(CausalityReport {
        per_step,
        max_violation,
        tolerance: tol,
        passed: max_violation < tol,
    })
}

/// Number of steps of a uniform horizon-`T` grid at or before time `tau`.
pub fn steps_before(tau: f64, horizon: usize) -> usize {
    ((tau * horizon as f64) + 1e-9).floor() as usize
}

/// `Cov(U_t, Y_s | U_{1:k})` with `k = floor(tau T)`.
pub fn conditional_cross_covariance(coupling: &GaussianJoint, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let horizon = coupling.coupling_horizon()?;
    conditional_cross_covariance_at(coupling, steps_before(tau, horizon))
}

/// `Cov(U_t, Y_s | U_{1:k})` as a `T x T` matrix; rows `t <= k` are zero.
pub fn conditional_cross_covariance_at(coupling: &GaussianJoint, k: usize) -> Result<DMatrix<f64>> {
    let horizon = coupling.coupling_horizon()?;
    if k > horizon {
        return Err(Error::StepOutOfRange { step: k, horizon });
    }
    let layout = coupling.layout();
    let given = layout.indices(&(1..=k).map(Coord::input).collect::<Vec<_>>())?;
    let free_u: Vec<Coord> = (k + 1..=horizon).map(Coord::input).collect();
    let all_y: Vec<Coord> = (1..=horizon).map(Coord::output).collect();
    let target = layout.indices(&[free_u, all_y].concat())?;
    let cov = if given.is_empty() {
        marginalize(coupling, &target)?.cov().clone()
    } else {
        condition(coupling, &given, &target)?.cov().clone()
    };
    let nf = horizon - k;
    let mut out = DMatrix::zeros(horizon, horizon);
    out.view_mut((k, 0), (nf, horizon))
        .copy_from(&cov.view((0, nf), (nf, horizon)));
    Ok(out)
}

/// Elementwise `sign(x) log10(1 + |x| / linthresh)`.
pub fn symlog_transform(m: &DMatrix<f64>, linthresh: f64) -> DMatrix<f64> {
    m.map(|x| symlog(x, linthresh))
}

pub fn symlog(x: f64, linthresh: f64) -> f64 {
    x.signum() * (x.abs() / linthresh).ln_1p() / std::f64::consts::LN_10
}
