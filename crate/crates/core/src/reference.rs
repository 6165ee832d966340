//! Reference couplings induced by linear Gaussian input-output models.
//!
//! A model `Y_t = h_t' U_{1:t} + f_t' Y_{1:t-1} + b_t + w_t` with
//! `w_t ~ N(0, eps_t^2)` is non-anticipating, so the coupling it induces
//! together with any input law is causal. Scalar state-space models are
//! reduced to this form by unrolling the Kalman predictor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{
    self, AutoregressiveForm, GaussianJoint, InputStep, OutputStep, Role, Triangular,
};

/// One step of the input-output model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStep {
    /// Coefficients on `U_{1:t}` (length `t`).
    pub h: Vec<f64>,
    /// Coefficients on `Y_{1:t-1}` (length `t - 1`).
    pub f: Vec<f64>,
    pub b: f64,
    /// Noise standard deviation.
    pub eps: f64,
}

/// Per-step coefficients of a causal linear Gaussian input-output model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    steps: Vec<ModelStep>,
}

impl CoefficientSpec {
    pub fn new(steps: Vec<ModelStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSpec("model has no steps".into()));
        }
        for (i, s) in steps.iter().enumerate() {
            let t = i + 1;
            if s.h.len() != t || s.f.len() != t - 1 {
                return Err(Error::InvalidSpec(format!(
                    "step {t}: expected h of length {t} and f of length {}, got {} and {}",
                    t - 1,
                    s.h.len(),
                    s.f.len()
                )));
            }
            if !(s.eps > 0.0) || !s.eps.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "step {t}: noise level eps must be positive, got {}",
                    s.eps
                )));
            }
            if s.h.iter().chain(&s.f).chain([&s.b]).any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "step {t}: non-finite coefficient"
                )));
            }
        }
        Ok(Self { steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[ModelStep] {
        &self.steps
    }

    /// Step at 1-based time `t`.
    pub fn step(&self, t: usize) -> &ModelStep {
        &self.steps[t - 1]
    }

    /// Quadratic transport cost `sum_t (y_t - h_t'u_{1:t} - f_t'y_{1:t-1} - b_t)^2 / (2 eps_t^2)`.
    pub fn cost(&self, inputs: &[f64], outputs: &[f64]) -> f64 {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pred = s.h.iter().zip(inputs).map(|(a, b)| a * b).sum::<f64>()
                    + s.f.iter().zip(outputs).map(|(a, b)| a * b).sum::<f64>()
                    + s.b;
                let r = outputs[i] - pred;
                r * r / (2.0 * s.eps * s.eps)
            })
            .sum()
    }
}

/// Scalar linear Gaussian state-space model with input:
/// `X_t = F X_{t-1} + B U_t + sqrt(Q) V_t`, `Y_t = H X_t + sqrt(R) W_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpaceSpec {
    pub transition: f64,
    pub input_gain: f64,
    pub process_var: f64,
    pub output_gain: f64,
    pub noise_var: f64,
    pub initial_mean: f64,
    pub initial_var: f64,
    pub horizon: usize,
}

impl StateSpaceSpec {
    /// Model with `F, B, Q, H, R` as given and a known zero initial state.
    pub fn new(f: f64, b: f64, q: f64, h: f64, r: f64, horizon: usize) -> Self {
        Self {
            transition: f,
            input_gain: b,
            process_var: q,
            output_gain: h,
            noise_var: r,
            initial_mean: 0.0,
            initial_var: 0.0,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.transition,
            self.input_gain,
            self.process_var,
            self.output_gain,
            self.noise_var,
            self.initial_mean,
            self.initial_var,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "non-finite state-space parameter".into(),
            ));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::InvalidSpec(
                "observation noise variance R must be positive".into(),
            ));
        }
        if self.process_var < 0.0 || self.initial_var < 0.0 {
            return Err(Error::InvalidSpec(
                "process variance Q and initial variance P0 must be non-negative".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidSpec("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// `t_k = k / T` for `k = 1..T`.
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanSpec {
    Constant(f64),
    PerStep(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `K(s; sigma) = exp(-|s| / (2 sigma^2))`.
    Exponential {
        sigma: f64,
    },
    Matrix(DMatrix<f64>),
}

impl KernelSpec {
    pub fn eval(sigma: f64, s: f64) -> f64 {
        (-s.abs() / (2.0 * sigma * sigma)).exp()
    }
}

/// A stationary Gaussian process law sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSpec {
    pub horizon: usize,
    pub grid: Grid,
    pub mean: MeanSpec,
    pub kernel: KernelSpec,
}

impl MarginalSpec {
    pub fn exponential(horizon: usize, mean: f64, sigma: f64) -> Self {
        Self {
            horizon,
            grid: Grid::Uniform,
            mean: MeanSpec::Constant(mean),
            kernel: KernelSpec::Exponential { sigma },
        }
    }

    pub fn grid_points(&self) -> Vec<f64> {
        match &self.grid {
            Grid::Uniform => uniform_grid(self.horizon),
            Grid::Explicit(points) => points.clone(),
        }
    }
}

pub fn uniform_grid(horizon: usize) -> Vec<f64> {
    (1..=horizon).map(|k| k as f64 / horizon as f64).collect()
}

/// Mean vector and covariance matrix of `spec` as a `role` marginal.
pub fn realize_marginal(spec: &MarginalSpec, role: Role) -> Result<GaussianJoint> {
    let n = spec.horizon;
    if n == 0 {
        return Err(Error::InvalidSpec("horizon must be at least 1".into()));
    }
    let mean = match &spec.mean {
        MeanSpec::Constant(c) => DVector::from_element(n, *c),
        MeanSpec::PerStep(v) if v.len() == n => DVector::from_vec(v.clone()),
        MeanSpec::PerStep(v) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            })
        }
    };
    let cov = match &spec.kernel {
        KernelSpec::Exponential { sigma } => {
            if !(*sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "kernel sigma must be positive, got {sigma}"
                )));
            }
            let grid = spec.grid_points();
            if grid.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: grid.len(),
                });
            }
            DMatrix::from_fn(n, n, |i, j| KernelSpec::eval(*sigma, grid[i] - grid[j]))
        }
        KernelSpec::Matrix(m) => {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: m.nrows(),
                });
            }
            m.clone()
        }
    };
    if cov.clone().cholesky().is_none() {
        return Err(Error::DegenerateKernelMatrix);
    }
    GaussianJoint::marginal(role, mean, cov)
}

/// Unrolls the Kalman predictor of `ss` into per-step model coefficients:
/// the one-step output prediction is affine in `(u_{1:t}, y_{1:t-1})` and the
/// innovation variance is `H P_{t|t-1} H + R`.
pub fn kalman_coefficients(ss: &StateSpaceSpec) -> Result<CoefficientSpec> {
    ss.validate()?;
    let StateSpaceSpec {
        transition: f,
        input_gain: b,
        process_var: q,
        output_gain: h,
        noise_var: r,
        ..
    } = *ss;

    // predictive state mean x_{t|t-1} = on_u . u_{1:t} + on_y . y_{1:t-1} + offset
    let mut on_u = vec![b];
    let mut on_y: Vec<f64> = Vec::new();
    let mut offset = f * ss.initial_mean;
    let mut p = f * ss.initial_var * f + q;

    let mut steps = Vec::with_capacity(ss.horizon);
    for t in 1..=ss.horizon {
        let innovation = h * p * h + r;
        steps.push(ModelStep {
            h: on_u.iter().map(|c| h * c).collect(),
            f: on_y.iter().map(|c| h * c).collect(),
            b: h * offset,
            eps: innovation.sqrt(),
        });
        if t == ss.horizon {
            break;
        }
        let gain = p * h / innovation;
        let keep = 1.0 - gain * h;
        // filter then predict
        for c in on_u.iter_mut().chain(on_y.iter_mut()) {
            *c *= keep * f;
        }
        on_y.push(gain * f);
        on_u.push(b);
        offset *= keep * f;
        p = f * keep * p * f + q;
    }
    CoefficientSpec::new(steps)
}

/// Sequential conditionals `(coefficients on earlier steps, mean, var)` of a
/// single-process marginal.
pub(crate) fn marginal_steps(marginal: &GaussianJoint) -> Result<Vec<(Vec<f64>, f64, f64)>> {
    let tri = Triangular::factor(marginal.mean(), marginal.cov())?;
    let n = marginal.dim();
    if tri.var[n - 1] <= 0.0 {
        return Err(Error::DegenerateMarginal(
            "last conditional variance is zero".into(),
        ));
    }
    Ok((0..n)
        .map(|i| {
            let coeffs = (0..i).map(|j| tri.strict[(i, j)]).collect();
            (coeffs, tri.intercept[i], tri.var[i])
        })
        .collect())
}

/// Causal coupling of `inputs` with the outputs generated by `coeffs`.
pub fn build_reference(coeffs: &CoefficientSpec, inputs: &GaussianJoint) -> Result<GaussianJoint> {
    let horizon = coeffs.horizon();
    gaussian::check_marginal(inputs, Role::Input, horizon)?;
    let input_steps = marginal_steps(inputs)
        .map_err(|e| Error::DegenerateMarginal(format!("input marginal: {e}")))?
        .into_iter()
        .map(|(c, mean, var)| InputStep {
            on_outputs: vec![0.0; c.len()],
            on_inputs: c,
            mean,
            var,
        })
        .collect();
    let output_steps = coeffs
        .steps()
        .iter()
        .map(|s| OutputStep {
            on_inputs: s.h.clone(),
            on_outputs: s.f.clone(),
            mean: s.b,
            var: s.eps * s.eps,
        })
        .collect();
    gaussian::recompose(&AutoregressiveForm::new(input_steps, output_steps)?)
}

pub fn reference_from_state_space(
    ss: &StateSpaceSpec,
    inputs: &GaussianJoint,
) -> Result<GaussianJoint> {
    build_reference(&kalman_coefficients(ss)?, inputs)
}

/// The same coupling as [`reference_from_state_space`], built without the
/// filter: `(U, X_0, V, W)` are independent, `(U, X, Y)` is a linear image of
/// them, and `X` is marginalized out.
pub fn stacked_state_space_joint(
    ss: &StateSpaceSpec,
    inputs: &GaussianJoint,
) -> Result<GaussianJoint> {
    ss.validate()?;
    let n = ss.horizon;
    gaussian::check_marginal(inputs, Role::Input, n)?;
    // sources: U (n), X0 (1), V (n), W (n)
    let ns = 3 * n + 1;
    let (x0, vs, ws) = (n, n + 1, 2 * n + 1);
    let mut src_mean = DVector::zeros(ns);
    let mut src_cov = DMatrix::zeros(ns, ns);
    src_mean.rows_mut(0, n).copy_from(inputs.mean());
    src_cov.view_mut((0, 0), (n, n)).copy_from(inputs.cov());
    src_mean[x0] = ss.initial_mean;
    src_cov[(x0, x0)] = ss.initial_var;
    for i in 0..2 * n {
        src_cov[(vs + i, vs + i)] = 1.0;
    }

    // rows: U_1..U_n, X_1..X_n, Y_1..Y_n
    let mut map = DMatrix::<f64>::zeros(3 * n, ns);
    for t in 0..n {
        map[(t, t)] = 1.0;
    }
    let qs = ss.process_var.sqrt();
    let rs = ss.noise_var.sqrt();
    for t in 0..n {
        let xt = n + t;
        if t == 0 {
            map[(xt, x0)] = ss.transition;
        } else {
            let prev = map.row(xt - 1).clone_owned() * ss.transition;
            map.row_mut(xt).copy_from(&prev);
        }
        map[(xt, t)] += ss.input_gain;
        map[(xt, vs + t)] += qs;
        let yt = 2 * n + t;
        let y = map.row(xt).clone_owned() * ss.output_gain;
        map.row_mut(yt).copy_from(&y);
        map[(yt, ws + t)] += rs;
    }
    // marginalize X: keep the U and Y rows of the stacked map
    let keep: Vec<usize> = (0..n).chain(2 * n..3 * n).collect();
    let all: Vec<usize> = (0..ns).collect();
    let map = crate::linalg::select(&map, &keep, &all);
    let mean = &map * &src_mean;
    let cov = &map * &src_cov * map.transpose();
    GaussianJoint::coupling(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn unit_ss(horizon: usize) -> StateSpaceSpec {
        StateSpaceSpec::new(1.0, 1.0, 1.0, 1.0, 1.0, horizon)
    }

    #[test]
    fn exponential_kernel_on_two_points() {
        let spec = MarginalSpec {
            horizon: 2,
            grid: Grid::Explicit(vec![0.0, 1.0]),
            mean: MeanSpec::Constant(1.0),
            kernel: KernelSpec::Exponential { sigma: 1.0 },
        };
        let m = realize_marginal(&spec, Role::Input).unwrap();
        assert_eq!(m.mean(), &dvector![1.0, 1.0]);
        assert_eq!(m.cov()[(0, 0)], 1.0);
        assert_abs_diff_eq!(m.cov()[(0, 1)], (-0.5f64).exp(), epsilon = 1e-16);
    }

    #[test]
    fn exponential_kernel_adjacent_entries() {
        let m = realize_marginal(&MarginalSpec::exponential(3, 0.0, 0.5), Role::Output).unwrap();
        for i in 0..3 {
            assert_eq!(m.cov()[(i, i)], 1.0);
        }
        // adjacent spacing 1/3 on the default grid
        assert_abs_diff_eq!(
            m.cov()[(0, 1)],
            (-(1.0 / 3.0) / 0.5f64).exp(),
            epsilon = 1e-15
        );
        let spec = MarginalSpec {
            horizon: 3,
            grid: Grid::Explicit(vec![0.0, 0.5, 1.0]),
            mean: MeanSpec::Constant(0.0),
            kernel: KernelSpec::Exponential { sigma: 0.5 },
        };
        let m = realize_marginal(&spec, Role::Output).unwrap();
        assert_abs_diff_eq!(m.cov()[(1, 2)], (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn duplicate_grid_points_are_degenerate() {
        let spec = MarginalSpec {
            horizon: 2,
            grid: Grid::Explicit(vec![0.5, 0.5]),
            mean: MeanSpec::Constant(0.0),
            kernel: KernelSpec::Exponential { sigma: 1.0 },
        };
        assert_eq!(
            realize_marginal(&spec, Role::Input),
            Err(Error::DegenerateKernelMatrix)
        );
    }

    #[test]
    fn kalman_hand_recursion() {
        let c = kalman_coefficients(&unit_ss(2)).unwrap();
        assert_eq!(c.step(1).h, vec![1.0]);
        assert_eq!(c.step(1).b, 0.0);
        assert_abs_diff_eq!(c.step(1).eps.powi(2), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.step(2).h[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.step(2).h[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.step(2).f[0], 0.5, epsilon = 1e-15);
        assert_eq!(c.step(2).b, 0.0);
        assert_abs_diff_eq!(c.step(2).eps.powi(2), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn kalman_pure_noise_output() {
        let ss = StateSpaceSpec::new(0.7, 0.0, 1.0, 0.0, 2.0, 4);
        let c = kalman_coefficients(&ss).unwrap();
        for s in c.steps() {
            assert!(s.h.iter().chain(&s.f).all(|&v| v == 0.0));
            assert_eq!(s.b, 0.0);
            assert_abs_diff_eq!(s.eps * s.eps, 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn innovation_variance_at_least_noise() {
        let ss = StateSpaceSpec {
            initial_var: 3.0,
            initial_mean: 1.5,
            ..StateSpaceSpec::new(0.9, -0.4, 0.2, 1.3, 0.5, 12)
        };
        for s in kalman_coefficients(&ss).unwrap().steps() {
            assert!(s.eps * s.eps >= 0.5);
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = ModelStep {
            h: vec![1.0],
            f: vec![],
            b: 0.0,
            eps: 0.0,
        };
        assert!(matches!(
            CoefficientSpec::new(vec![bad]),
            Err(Error::InvalidSpec(_))
        ));
        let short = ModelStep {
            h: vec![],
            f: vec![],
            b: 0.0,
            eps: 1.0,
        };
        assert!(CoefficientSpec::new(vec![short]).is_err());
        let ss = StateSpaceSpec {
            noise_var: 0.0,
            ..unit_ss(3)
        };
        assert!(kalman_coefficients(&ss).is_err());
    }

    #[test]
    fn reference_single_step() {
        let c = CoefficientSpec::new(vec![ModelStep {
            h: vec![1.0],
            f: vec![],
            b: 0.0,
            eps: 1.0,
        }])
        .unwrap();
        let u = GaussianJoint::marginal(Role::Input, dvector![0.0], dmatrix![1.0]).unwrap();
        let g = build_reference(&c, &u).unwrap();
        assert_eq!(g.mean(), &dvector![0.0, 0.0]);
        assert_eq!(g.cov(), &dmatrix![1.0, 1.0; 1.0, 2.0]);
    }

    #[test]
    fn reference_without_dependence_is_product() {
        let steps = (1..=3)
            .map(|t| ModelStep {
                h: vec![0.0; t],
                f: vec![0.0; t - 1],
                b: 0.5,
                eps: 2.0,
            })
            .collect();
        let c = CoefficientSpec::new(steps).unwrap();
        let u = realize_marginal(&MarginalSpec::exponential(3, 1.0, 1.0), Role::Input).unwrap();
        let g = build_reference(&c, &u).unwrap();
        let y = GaussianJoint::marginal(
            Role::Output,
            DVector::from_element(3, 0.5),
            DMatrix::identity(3, 3) * 4.0,
        )
        .unwrap();
        let expected = GaussianJoint::product(&u, &y).unwrap();
        assert!(gaussian::joint_distance(&g, &expected).unwrap() < 1e-12);
    }

    #[test]
    fn unit_state_space_variances() {
        let u = GaussianJoint::marginal(Role::Input, DVector::zeros(2), DMatrix::identity(2, 2))
            .unwrap();
        let g = reference_from_state_space(&unit_ss(2), &u).unwrap();
        // Var(Y_1) = h_1^2 Var(U_1) + eps_1^2
        assert_abs_diff_eq!(g.cov()[(2, 2)], 3.0, epsilon = 1e-12);
        // Cov(U_1, Y_2) = h_2[0] + f_2 Cov(U_1, Y_1)
        assert_abs_diff_eq!(g.cov()[(0, 3)], 1.0, epsilon = 1e-12);
        let stacked = stacked_state_space_joint(&unit_ss(2), &u).unwrap();
        assert!(gaussian::joint_distance(&g, &stacked).unwrap() < 1e-12);
    }

    #[test]
    fn zero_output_gain_decouples() {
        let ss = StateSpaceSpec::new(0.8, 1.0, 0.3, 0.0, 1.0, 4);
        let u = realize_marginal(&MarginalSpec::exponential(4, 1.0, 1.0), Role::Input).unwrap();
        let g = reference_from_state_space(&ss, &u).unwrap();
        assert_eq!(g.cov().view((0, 4), (4, 4)).amax(), 0.0);
    }

    #[test]
    fn cost_matches_closed_form() {
        let c = kalman_coefficients(&unit_ss(2)).unwrap();
        let u = [1.0, 2.0];
        let y = [0.5, 1.0];
        let r1 = 0.5 - 1.0;
        let r2 = 1.0 - (0.5 * 1.0 + 1.0 * 2.0) - 0.5 * 0.5;
        assert_abs_diff_eq!(
            c.cost(&u, &y),
            r1 * r1 / 4.0 + r2 * r2 / 5.0,
            epsilon = 1e-15
        );
    }
}
