//! Alternating KL projections for the entropic causal transport problem.
//!
//! One sweep applies the odd projection (fixed input law, optionally
//! causal) and then the even projection (fixed output law). Starting from
//! the reference coupling, the sweeps converge to the coupling closest to
//! the reference in KL divergence among those satisfying both constraints.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::gaussian::{
    self, condition, future_given_past, marginalize, AutoregressiveForm, Coord, GaussianJoint,
    InputStep, OutputStep, Role, Triangular,
};
use crate::linalg::SpdFactor;
use crate::reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Odd step projects onto causal couplings with the prescribed input law.
    Causal,
    /// Odd step projects onto all couplings with the prescribed input law.
    NonCausal,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Causal => "causal",
            Mode::NonCausal => "noncausal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornSettings {
    /// Stop once a sweep moves the coupling by less than this (max-abs).
    pub tol: f64,
    pub max_sweeps: usize,
    pub mode: Mode,
    /// `delta' M delta` at or below this is treated as exactly zero.
    pub delta_floor: f64,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 500,
            mode: Mode::Causal,
            delta_floor: 1e-14,
        }
    }
}

impl SinkhornSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidSpec("max_sweeps must be at least 1".into()));
        }
        if !(self.delta_floor >= 0.0) {
            return Err(Error::InvalidSpec(
                "delta_floor must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    /// Max-abs change of the coupling over the sweep.
    pub distance: f64,
    pub kl_to_reference: f64,
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: GaussianJoint,
    pub sweeps: usize,
    pub converged: bool,
    pub history: Vec<SweepRecord>,
    pub sweep_times: Vec<Duration>,
}

impl SinkhornResult {
    pub fn final_distance(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.distance)
    }

    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                sweeps: self.sweeps,
                distance: self.final_distance(),
            })
        }
    }
}

fn input_law_steps(mu: &GaussianJoint, horizon: usize) -> Result<Vec<(Vec<f64>, f64, f64)>> {
    gaussian::check_marginal(mu, Role::Input, horizon)?;
    reference::marginal_steps(mu).map_err(|e| Error::DegenerateMarginal(format!("input law: {e}")))
}

fn check_output_law(nu: &GaussianJoint, horizon: usize) -> Result<()> {
    gaussian::check_marginal(nu, Role::Output, horizon)?;
    if nu.cov().clone().cholesky().is_none() {
        return Err(Error::DegenerateMarginal(
            "output law covariance is singular".into(),
        ));
    }
    Ok(())
}

fn joint_from_triangular(tri: &Triangular) -> Result<GaussianJoint> {
    gaussian::recompose(&AutoregressiveForm::from_triangular(tri)?)
}

/// KL projection of `prev` onto causal couplings whose input law is `mu`.
///
/// Input steps are copied from the disintegration of `mu` with no
/// dependence on past outputs. Output steps are solved backward from
/// `t = T`: each one reweights the previous output conditional by the
/// exponentiated divergence between the future-given-past laws of the new
/// coupling and of `prev`.
///
/// The divergence is carried as the innovation residuals of `prev`'s own
/// sequential model evaluated along the new coupling's conditional mean of
/// the future; weighting by `prev`'s innovation variances gives the
/// quadratic form of the inverse future covariance without forming it.
pub fn odd_projection_causal(
    prev: &GaussianJoint,
    mu: &GaussianJoint,
    delta_floor: f64,
) -> Result<GaussianJoint> {
    let horizon = prev.coupling_horizon()?;
    let u_steps = input_law_steps(mu, horizon)?;
    let n = 2 * horizon;
    let g = Triangular::factor_coupling(prev)?;

    let mut pi = Triangular::zeros(n);
    for (i, (coeffs, mean, var)) in u_steps.into_iter().enumerate() {
        let row = Coord::input(i + 1).interleaved_position();
        for (s, c) in coeffs.into_iter().enumerate() {
            pi.strict[(row, Coord::input(s + 1).interleaved_position())] = c;
        }
        pi.intercept[row] = mean;
        pi.var[row] = var;
    }

    // Residual map at level t: rows are prev's innovations for z_{t+1:T},
    // columns the coefficients on z_{1:t}, plus a constant per row.
    let mut res_coeff: Vec<Vec<f64>> = Vec::new();
    let mut res_const: Vec<f64> = Vec::new();
    let mut res_weight: Vec<f64> = Vec::new();

    for t in (1..=horizon).rev() {
        let iu = Coord::input(t).interleaved_position();
        let iy = Coord::output(t).interleaved_position();
        let var_prev = g.var[iy];

        // w[c] = delta' M Delta_c for c < iy, w_m = delta' M Delta_m, beta = delta' M delta
        let mut w = vec![0.0; iy];
        let mut w_m = 0.0;
        let mut beta = 0.0;
        for ((row, &c0), &d) in res_coeff.iter().zip(&res_const).zip(&res_weight) {
            let v = row[iy] / d;
            beta += v * row[iy];
            w_m += v * c0;
            for (wc, rc) in w.iter_mut().zip(&row[..iy]) {
                *wc += v * rc;
            }
        }
        let alpha = if beta <= delta_floor {
            1.0
        } else {
            1.0 / (1.0 + var_prev * beta)
        };
        let var_new = var_prev * alpha;
        for (c, wc) in w.iter().enumerate().take(iy) {
            pi.strict[(iy, c)] = alpha * g.strict[(iy, c)] - var_new * wc;
        }
        pi.intercept[iy] = alpha * g.intercept[iy] - var_new * w_m;
        pi.var[iy] = var_new;

        if t == 1 {
            break;
        }
        if g.var[iu] <= 0.0 || g.var[iy] <= 0.0 {
            return Err(Error::SingularFutureCovariance { step: t - 1 });
        }

        // substitute u_t and y_t by the new coupling's conditional means given z_{1:t-1}
        let p = iu;
        let link = pi.strict[(iy, iu)];
        let u_row: Vec<f64> = (0..p).map(|c| pi.strict[(iu, c)]).collect();
        let u_const = pi.intercept[iu];
        let y_row: Vec<f64> = (0..p)
            .map(|c| pi.strict[(iy, c)] + link * u_row[c])
            .collect();
        let y_const = pi.intercept[iy] + link * u_const;

        for (row, c0) in res_coeff.iter_mut().zip(res_const.iter_mut()) {
            let (a, b) = (row[iu], row[iy]);
            row.truncate(p);
            for c in 0..p {
                row[c] += a * u_row[c] + b * y_row[c];
            }
            *c0 += a * u_const + b * y_const;
        }

        let gl = g.strict[(iy, iu)];
        let new_u: Vec<f64> = (0..p).map(|c| u_row[c] - g.strict[(iu, c)]).collect();
        let new_y: Vec<f64> = (0..p)
            .map(|c| y_row[c] - g.strict[(iy, c)] - gl * u_row[c])
            .collect();
        res_coeff.insert(0, new_y);
        res_coeff.insert(0, new_u);
        res_const.insert(0, y_const - g.intercept[iy] - gl * u_const);
        res_const.insert(0, u_const - g.intercept[iu]);
        res_weight.insert(0, g.var[iy]);
        res_weight.insert(0, g.var[iu]);
    }

    joint_from_triangular(&pi)
}

/// Same projection as [`odd_projection_causal`], evaluated with the explicit
/// `alpha_t`, `Sigma^psi`, `K^psi` expressions: future-given-past laws of
/// both couplings are formed by substitution and the future covariance of
/// `prev` is inverted. Steps with `delta_t = 0` keep `prev`'s output step.
pub fn odd_projection_causal_explicit(
    prev: &GaussianJoint,
    mu: &GaussianJoint,
) -> Result<GaussianJoint> {
    let horizon = prev.coupling_horizon()?;
    let u_steps = input_law_steps(mu, horizon)?;
    let prev_ar = gaussian::disintegrate(prev)?;

    let input_steps: Vec<InputStep> = u_steps
        .into_iter()
        .map(|(c, mean, var)| InputStep {
            on_outputs: vec![0.0; c.len()],
            on_inputs: c,
            mean,
            var,
        })
        .collect();
    let mut output_steps: Vec<OutputStep> = prev_ar.output_steps().to_vec();

    for t in (1..horizon).rev() {
        let ar = AutoregressiveForm::new(input_steps.clone(), output_steps.clone())?;
        let fp = future_given_past(&ar, t)?;
        let fg = future_given_past(&prev_ar, t)?;
        let inputs: Vec<Coord> = (1..=t).map(Coord::input).collect();
        let outputs: Vec<Coord> = (1..t).map(Coord::output).collect();
        let y_t = [Coord::output(t)];

        let delta = fp.coeff_columns(&y_t)? - fg.coeff_columns(&y_t)?;
        let delta_u = fp.coeff_columns(&inputs)? - fg.coeff_columns(&inputs)?;
        let delta_y = fp.coeff_columns(&outputs)? - fg.coeff_columns(&outputs)?;
        let delta_m = fp.intercept() - fg.intercept();

        let m = SpdFactor::new(fg.cov(), "future covariance")
            .map_err(|_| Error::SingularFutureCovariance { step: t })?
            .inverse();
        let dm = delta.transpose() * &m;
        let beta = (&dm * &delta)[(0, 0)];
        if beta <= 0.0 {
            continue;
        }
        let prev_step = prev_ar.output_step(t);
        let sigma_g = prev_step.var;
        let sigma_psi = 1.0 / beta;
        let alpha = sigma_psi / (sigma_g + sigma_psi);
        let k_psi_u = (&dm * &delta_u) * -sigma_psi;
        let k_psi_y = (&dm * &delta_y) * -sigma_psi;
        let m_psi = -sigma_psi * (&dm * &delta_m)[0];

        output_steps[t - 1] = OutputStep {
            on_inputs: (0..t)
                .map(|c| alpha * prev_step.on_inputs[c] + (1.0 - alpha) * k_psi_u[(0, c)])
                .collect(),
            on_outputs: (0..t - 1)
                .map(|c| alpha * prev_step.on_outputs[c] + (1.0 - alpha) * k_psi_y[(0, c)])
                .collect(),
            mean: alpha * prev_step.mean + (1.0 - alpha) * m_psi,
            var: alpha * sigma_g,
        };
    }
    gaussian::recompose(&AutoregressiveForm::new(input_steps, output_steps)?)
}

/// KL projection of `prev` onto all couplings whose input law is `mu`: the
/// conditional law of outputs given inputs is kept.
pub fn odd_projection_noncausal(prev: &GaussianJoint, mu: &GaussianJoint) -> Result<GaussianJoint> {
    let horizon = prev.coupling_horizon()?;
    gaussian::check_marginal(mu, Role::Input, horizon)?;
    if mu.cov().clone().cholesky().is_none() {
        return Err(Error::DegenerateMarginal(
            "input law covariance is singular".into(),
        ));
    }
    let layout = prev.layout();
    let y_given_u = condition(
        prev,
        &layout.indices_of_role(Role::Input),
        &layout.indices_of_role(Role::Output),
    )?;
    y_given_u.compose(mu)
}

/// KL projection of `prev` onto couplings whose output law is `nu`: the
/// conditional law of inputs given outputs is kept.
pub fn even_projection(prev: &GaussianJoint, nu: &GaussianJoint) -> Result<GaussianJoint> {
    let horizon = prev.coupling_horizon()?;
    check_output_law(nu, horizon)?;
    let layout = prev.layout();
    let u_idx = layout.indices_of_role(Role::Input);
    let y_idx = layout.indices_of_role(Role::Output);
    let u_given_y = condition(prev, &y_idx, &u_idx)?;
    // composed order is (Y, U); restore block order
    let joint = u_given_y.compose(nu)?;
    let order: Vec<usize> = (horizon..2 * horizon).chain(0..horizon).collect();
    marginalize(&joint, &order)
}

pub fn odd_projection(
    prev: &GaussianJoint,
    mu: &GaussianJoint,
    settings: &SinkhornSettings,
) -> Result<GaussianJoint> {
    match settings.mode {
        Mode::Causal => odd_projection_causal(prev, mu, settings.delta_floor),
        Mode::NonCausal => odd_projection_noncausal(prev, mu),
    }
}

/// Alternates odd and even projections starting from `reference`.
///
/// Returns with `converged = false` when `max_sweeps` is exhausted.
pub fn run(
    reference: &GaussianJoint,
    mu: &GaussianJoint,
    nu: &GaussianJoint,
    settings: &SinkhornSettings,
) -> Result<SinkhornResult> {
    settings.validate()?;
    let horizon = reference.coupling_horizon()?;
    gaussian::check_marginal(mu, Role::Input, horizon)?;
    check_output_law(nu, horizon)?;

    let mut current = reference.clone();
    let mut history = Vec::new();
    let mut sweep_times = Vec::new();
    let mut converged = false;
    for sweep in 1..=settings.max_sweeps {
        let start = Instant::now();
        let odd = odd_projection(&current, mu, settings)?;
        let even = even_projection(&odd, nu)?;
        let distance = gaussian::joint_distance(&even, &current)?;
        let kl_to_reference = gaussian::kl_divergence(&even, reference)?;
        sweep_times.push(start.elapsed());
        history.push(SweepRecord {
            sweep,
            distance,
            kl_to_reference,
        });
        current = even;
        if distance < settings.tol {
            converged = true;
            break;
        }
    }
    Ok(SinkhornResult {
        coupling: current,
        sweeps: history.len(),
        converged,
        history,
        sweep_times,
    })
}
