//! Finite-dimensional Gaussian algebra over input/output processes.
//!
//! A [`GaussianJoint`] stores its coordinates in block order (all inputs
//! `U_1..U_T`, then all outputs `Y_1..Y_T`). The temporal, interleaved
//! order `(u_1, y_1, u_2, y_2, ...)` is a view derived from the [`Layout`]
//! and is the order in which an [`AutoregressiveForm`] factorizes the law.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};

/// Whether a coordinate belongs to the input or the output process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Input,
    Output,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Input => write!(f, "U"),
            Role::Output => write!(f, "Y"),
        }
    }
}

/// A single coordinate: a role and a 1-based time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub role: Role,
    pub step: usize,
}

impl Coord {
    pub fn input(step: usize) -> Self {
        Self {
            role: Role::Input,
            step,
        }
    }

    pub fn output(step: usize) -> Self {
        Self {
            role: Role::Output,
            step,
        }
    }

    /// Position in the interleaved temporal order `(u_1, y_1, u_2, ...)`.
    pub fn interleaved_position(&self) -> usize {
        2 * (self.step - 1) + usize::from(self.role == Role::Output)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.role, self.step)
    }
}

/// Assigns each stored coordinate its role and time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    coords: Vec<Coord>,
}

impl Layout {
    pub fn new(coords: Vec<Coord>) -> Result<Self> {
        for (i, c) in coords.iter().enumerate() {
            if c.step == 0 {
                return Err(Error::LayoutMismatch(format!("coordinate {i} has step 0")));
            }
            if coords[..i].contains(c) {
                return Err(Error::LayoutMismatch(format!("coordinate {c} repeated")));
            }
        }
        Ok(Self { coords })
    }

    /// Block layout of a full coupling: `U_1..U_T, Y_1..Y_T`.
    pub fn coupling(horizon: usize) -> Self {
        let coords = (1..=horizon)
            .map(Coord::input)
            .chain((1..=horizon).map(Coord::output))
            .collect();
        Self { coords }
    }

    /// Layout of a single-process marginal over steps `1..=horizon`.
    pub fn marginal(role: Role, horizon: usize) -> Self {
        Self {
            coords: (1..=horizon).map(|step| Coord { role, step }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> Coord {
        self.coords[i]
    }

    pub fn position(&self, coord: Coord) -> Option<usize> {
        self.coords.iter().position(|c| *c == coord)
    }

    /// Storage index of `coord`, or a layout error if absent.
    pub fn index_of(&self, coord: Coord) -> Result<usize> {
        self.position(coord)
            .ok_or_else(|| Error::LayoutMismatch(format!("coordinate {coord} not present")))
    }

    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            coords: keep.iter().map(|&i| self.coords[i]).collect(),
        }
    }

    /// Horizon `T` when this is exactly the block layout of a full coupling.
    pub fn coupling_horizon(&self) -> Option<usize> {
        let n = self.coords.len();
        if n.is_multiple_of(2) && *self == Layout::coupling(n / 2) {
            Some(n / 2)
        } else {
            None
        }
    }

    pub fn indices_of_role(&self, role: Role) -> Vec<usize> {
        (0..self.coords.len())
            .filter(|&i| self.coords[i].role == role)
            .collect()
    }

    /// Storage indices of the given coordinates, in the order given.
    pub fn indices(&self, coords: &[Coord]) -> Result<Vec<usize>> {
        coords.iter().map(|&c| self.index_of(c)).collect()
    }
}

/// Coordinates `z_{1:t} = (u_1, y_1, ..., u_t, y_t)` in interleaved order.
pub fn interleaved_prefix(t: usize) -> Vec<Coord> {
    (1..=t)
        .flat_map(|s| [Coord::input(s), Coord::output(s)])
        .collect()
}

/// Coordinates `z_{from:to}` in interleaved order.
pub fn interleaved_range(from: usize, to: usize) -> Vec<Coord> {
    (from..=to)
        .flat_map(|s| [Coord::input(s), Coord::output(s)])
        .collect()
}

/// Joint Gaussian law with a role/time layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianJoint {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    layout: Layout,
}

impl GaussianJoint {
    /// Validates symmetry and positive semidefiniteness. The stored
    /// covariance is symmetrized and roundoff-negative eigenvalues clipped.
    pub fn new(mean: DVector<f64>, mut cov: DMatrix<f64>, layout: Layout) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: cov.nrows().max(cov.ncols()),
            });
        }
        if layout.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: layout.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean entry".into()));
        }
        linalg::sanitize_covariance(&mut cov)?;
        Ok(Self { mean, cov, layout })
    }

    /// Full coupling over horizon `mean.len() / 2` in block order.
    pub fn coupling(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !mean.len().is_multiple_of(2) {
            return Err(Error::LayoutMismatch(format!(
                "coupling dimension {} is odd",
                mean.len()
            )));
        }
        let horizon = mean.len() / 2;
        Self::new(mean, cov, Layout::coupling(horizon))
    }

    pub fn marginal(role: Role, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let horizon = mean.len();
        Self::new(mean, cov, Layout::marginal(role, horizon))
    }

    /// Independent coupling of an input marginal and an output marginal.
    pub fn product(inputs: &GaussianJoint, outputs: &GaussianJoint) -> Result<Self> {
        let horizon = inputs.dim();
        check_marginal(inputs, Role::Input, horizon)?;
        check_marginal(outputs, Role::Output, horizon)?;
        let mut mean = DVector::zeros(2 * horizon);
        let mut cov = DMatrix::zeros(2 * horizon, 2 * horizon);
        mean.rows_mut(0, horizon).copy_from(&inputs.mean);
        mean.rows_mut(horizon, horizon).copy_from(&outputs.mean);
        cov.view_mut((0, 0), (horizon, horizon))
            .copy_from(&inputs.cov);
        cov.view_mut((horizon, horizon), (horizon, horizon))
            .copy_from(&outputs.cov);
        Self::new(mean, cov, Layout::coupling(horizon))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Horizon `T` of a full coupling.
    pub fn coupling_horizon(&self) -> Result<usize> {
        self.layout
            .coupling_horizon()
            .ok_or_else(|| Error::LayoutMismatch("expected a full U/Y coupling".into()))
    }

    pub fn input_marginal(&self) -> Result<GaussianJoint> {
        marginalize(self, &self.layout.indices_of_role(Role::Input))
    }

    pub fn output_marginal(&self) -> Result<GaussianJoint> {
        marginalize(self, &self.layout.indices_of_role(Role::Output))
    }

    /// Mean and covariance permuted into interleaved temporal order.
    fn interleaved(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let horizon = self.coupling_horizon()?;
        let order = self.layout.indices(&interleaved_prefix(horizon))?;
        Ok((
            linalg::select_vec(&self.mean, &order),
            linalg::select(&self.cov, &order, &order),
        ))
    }
}

pub(crate) fn check_marginal(m: &GaussianJoint, role: Role, horizon: usize) -> Result<()> {
    if m.layout != Layout::marginal(role, horizon) {
        return Err(Error::LayoutMismatch(format!(
            "expected a {role} marginal over {horizon} steps"
        )));
    }
    Ok(())
}

/// Affine-Gaussian conditional law `target | given ~ N(coeff * given + intercept, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    coeff: DMatrix<f64>,
    intercept: DVector<f64>,
    cov: DMatrix<f64>,
    given_layout: Layout,
    target_layout: Layout,
}

impl ConditionalGaussian {
    pub fn new(
        coeff: DMatrix<f64>,
        intercept: DVector<f64>,
        mut cov: DMatrix<f64>,
        given_layout: Layout,
        target_layout: Layout,
    ) -> Result<Self> {
        let nt = target_layout.len();
        let ng = given_layout.len();
        if coeff.nrows() != nt || coeff.ncols() != ng {
            return Err(Error::DimensionMismatch {
                expected: nt * ng,
                actual: coeff.nrows() * coeff.ncols(),
            });
        }
        if intercept.len() != nt {
            return Err(Error::DimensionMismatch {
                expected: nt,
                actual: intercept.len(),
            });
        }
        if cov.nrows() != nt || cov.ncols() != nt {
            return Err(Error::DimensionMismatch {
                expected: nt,
                actual: cov.nrows(),
            });
        }
        linalg::sanitize_covariance(&mut cov)?;
        Ok(Self {
            coeff,
            intercept,
            cov,
            given_layout,
            target_layout,
        })
    }

    pub fn coeff(&self) -> &DMatrix<f64> {
        &self.coeff
    }

    pub fn intercept(&self) -> &DVector<f64> {
        &self.intercept
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn given_layout(&self) -> &Layout {
        &self.given_layout
    }

    pub fn target_layout(&self) -> &Layout {
        &self.target_layout
    }

    pub fn is_empty(&self) -> bool {
        self.target_layout.is_empty()
    }

    /// Coefficient columns for the listed given coordinates, in that order.
    pub fn coeff_columns(&self, coords: &[Coord]) -> Result<DMatrix<f64>> {
        let cols = self.given_layout.indices(coords)?;
        let rows: Vec<usize> = (0..self.coeff.nrows()).collect();
        Ok(linalg::select(&self.coeff, &rows, &cols))
    }

    /// Joint law of `(given, target)` obtained by mixing this conditional
    /// over a law of the given coordinates (law of total mean/covariance).
    pub fn compose(&self, given: &GaussianJoint) -> Result<GaussianJoint> {
        if given.layout != self.given_layout {
            return Err(Error::LayoutMismatch(
                "given marginal does not match the conditional's given layout".into(),
            ));
        }
        let ng = given.dim();
        let nt = self.target_layout.len();
        let n = ng + nt;
        let mut mean = DVector::zeros(n);
        mean.rows_mut(0, ng).copy_from(&given.mean);
        mean.rows_mut(ng, nt)
            .copy_from(&(&self.coeff * &given.mean + &self.intercept));
        let cross = &self.coeff * &given.cov;
        let target_cov = &cross * self.coeff.transpose() + &self.cov;
        let mut cov = DMatrix::zeros(n, n);
        cov.view_mut((0, 0), (ng, ng)).copy_from(&given.cov);
        cov.view_mut((ng, 0), (nt, ng)).copy_from(&cross);
        cov.view_mut((0, ng), (ng, nt))
            .copy_from(&cross.transpose());
        cov.view_mut((ng, ng), (nt, nt)).copy_from(&target_cov);
        let coords = self
            .given_layout
            .coords()
            .iter()
            .chain(self.target_layout.coords())
            .copied()
            .collect();
        GaussianJoint::new(mean, cov, Layout::new(coords)?)
    }
}

fn check_indices(dim: usize, idx: &[usize]) -> Result<()> {
    for (k, &i) in idx.iter().enumerate() {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        if idx[..k].contains(&i) {
            return Err(Error::LayoutMismatch(format!("index {i} repeated")));
        }
    }
    Ok(())
}

/// Conditional law of `target` given `given` (storage indices of `joint`).
pub fn condition(
    joint: &GaussianJoint,
    given: &[usize],
    target: &[usize],
) -> Result<ConditionalGaussian> {
    let d = joint.dim();
    check_indices(d, given)?;
    check_indices(d, target)?;
    if let Some(&i) = given.iter().find(|i| target.contains(i)) {
        return Err(Error::OverlappingIndexSets(i));
    }
    let s_gg = linalg::select(&joint.cov, given, given);
    let s_gt = linalg::select(&joint.cov, given, target);
    let s_tt = linalg::select(&joint.cov, target, target);
    let m_g = linalg::select_vec(&joint.mean, given);
    let m_t = linalg::select_vec(&joint.mean, target);

    let factor = SpdFactor::new(&s_gg, "given block")?;
    // coeff = S_tg S_gg^{-1} = (S_gg^{-1} S_gt)^T
    let coeff = factor.solve(&s_gt).transpose();
    let intercept = &m_t - &coeff * &m_g;
    let mut cov = &s_tt - &coeff * &s_gt;
    linalg::symmetrize(&mut cov);
    ConditionalGaussian::new(
        coeff,
        intercept,
        cov,
        joint.layout.restrict(given),
        joint.layout.restrict(target),
    )
}

/// Restriction of `joint` to the coordinates in `keep`, in that order.
pub fn marginalize(joint: &GaussianJoint, keep: &[usize]) -> Result<GaussianJoint> {
    if keep.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    check_indices(joint.dim(), keep)?;
    Ok(GaussianJoint {
        mean: linalg::select_vec(&joint.mean, keep),
        cov: linalg::select(&joint.cov, keep, keep),
        layout: joint.layout.restrict(keep),
    })
}

/// Per-step conditional of `u_t` given `z_{1:t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputStep {
    /// Coefficients on `u_{1:t-1}`.
    pub on_inputs: Vec<f64>,
    /// Coefficients on `y_{1:t-1}`.
    pub on_outputs: Vec<f64>,
    pub mean: f64,
    pub var: f64,
}

/// Per-step conditional of `y_t` given `(u_{1:t}, y_{1:t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputStep {
    /// Coefficients on `u_{1:t}`.
    pub on_inputs: Vec<f64>,
    /// Coefficients on `y_{1:t-1}`.
    pub on_outputs: Vec<f64>,
    pub mean: f64,
    pub var: f64,
}

/// Temporal disintegration of a coupling into per-step affine-Gaussian
/// conditionals, alternating input and output steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoregressiveForm {
    input_steps: Vec<InputStep>,
    output_steps: Vec<OutputStep>,
}

impl AutoregressiveForm {
    pub fn new(input_steps: Vec<InputStep>, output_steps: Vec<OutputStep>) -> Result<Self> {
        if input_steps.len() != output_steps.len() || input_steps.is_empty() {
            return Err(Error::InvalidAutoregressiveForm(format!(
                "{} input steps vs {} output steps",
                input_steps.len(),
                output_steps.len()
            )));
        }
        for (i, (u, y)) in input_steps.iter().zip(&output_steps).enumerate() {
            let t = i + 1;
            let ok = u.on_inputs.len() == t - 1
                && u.on_outputs.len() == t - 1
                && y.on_inputs.len() == t
                && y.on_outputs.len() == t - 1;
            if !ok {
                return Err(Error::InvalidAutoregressiveForm(format!(
                    "coefficient lengths at step {t}"
                )));
            }
            let finite = u
                .on_inputs
                .iter()
                .chain(&u.on_outputs)
                .chain(&y.on_inputs)
                .chain(&y.on_outputs)
                .chain([&u.mean, &u.var, &y.mean, &y.var])
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!("step {t}")));
            }
            if u.var < 0.0 || y.var < 0.0 {
                return Err(Error::InvalidAutoregressiveForm(format!(
                    "negative variance at step {t}"
                )));
            }
        }
        Ok(Self {
            input_steps,
            output_steps,
        })
    }

    pub fn horizon(&self) -> usize {
        self.input_steps.len()
    }

    pub fn input_steps(&self) -> &[InputStep] {
        &self.input_steps
    }

    pub fn output_steps(&self) -> &[OutputStep] {
        &self.output_steps
    }

    /// Input step at 1-based time `t`.
    pub fn input_step(&self, t: usize) -> &InputStep {
        &self.input_steps[t - 1]
    }

    /// Output step at 1-based time `t`.
    pub fn output_step(&self, t: usize) -> &OutputStep {
        &self.output_steps[t - 1]
    }

    pub(crate) fn to_triangular(&self) -> Triangular {
        let horizon = self.horizon();
        let n = 2 * horizon;
        let mut tri = Triangular::zeros(n);
        for t in 1..=horizon {
            let u = &self.input_steps[t - 1];
            let iu = Coord::input(t).interleaved_position();
            for s in 1..t {
                tri.strict[(iu, Coord::input(s).interleaved_position())] = u.on_inputs[s - 1];
                tri.strict[(iu, Coord::output(s).interleaved_position())] = u.on_outputs[s - 1];
            }
            tri.intercept[iu] = u.mean;
            tri.var[iu] = u.var;

            let y = &self.output_steps[t - 1];
            let iy = Coord::output(t).interleaved_position();
            for s in 1..=t {
                tri.strict[(iy, Coord::input(s).interleaved_position())] = y.on_inputs[s - 1];
            }
            for s in 1..t {
                tri.strict[(iy, Coord::output(s).interleaved_position())] = y.on_outputs[s - 1];
            }
            tri.intercept[iy] = y.mean;
            tri.var[iy] = y.var;
        }
        tri
    }

    pub(crate) fn from_triangular(tri: &Triangular) -> Result<Self> {
        let horizon = tri.dim() / 2;
        let mut input_steps = Vec::with_capacity(horizon);
        let mut output_steps = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let iu = Coord::input(t).interleaved_position();
            let iy = Coord::output(t).interleaved_position();
            input_steps.push(InputStep {
                on_inputs: (1..t)
                    .map(|s| tri.strict[(iu, Coord::input(s).interleaved_position())])
                    .collect(),
                on_outputs: (1..t)
                    .map(|s| tri.strict[(iu, Coord::output(s).interleaved_position())])
                    .collect(),
                mean: tri.intercept[iu],
                var: tri.var[iu],
            });
            output_steps.push(OutputStep {
                on_inputs: (1..=t)
                    .map(|s| tri.strict[(iy, Coord::input(s).interleaved_position())])
                    .collect(),
                on_outputs: (1..t)
                    .map(|s| tri.strict[(iy, Coord::output(s).interleaved_position())])
                    .collect(),
                mean: tri.intercept[iy],
                var: tri.var[iy],
            });
        }
        Self::new(input_steps, output_steps)
    }
}

/// Dense form of a sequential affine-Gaussian model:
/// `z_i = sum_{j<i} strict[i,j] z_j + intercept[i] + e_i`, `e_i ~ N(0, var[i])`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Triangular {
    pub strict: DMatrix<f64>,
    pub intercept: DVector<f64>,
    pub var: DVector<f64>,
}

impl Triangular {
    pub fn zeros(n: usize) -> Self {
        Self {
            strict: DMatrix::zeros(n, n),
            intercept: DVector::zeros(n),
            var: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    /// Sequential conditioning (LDL^T without pivoting). Every pivot but the
    /// last conditions a later coordinate, so those must be well separated
    /// from zero.
    pub fn factor(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        let mut g = DMatrix::<f64>::zeros(n, n);
        let mut d = DVector::<f64>::zeros(n);
        for j in 0..n {
            let mut dj = cov[(j, j)];
            for k in 0..j {
                dj -= g[(j, k)] * g[(j, k)] * d[k];
            }
            let scale = cov[(j, j)].abs();
            if j + 1 < n && (dj <= 0.0 || dj <= scale / linalg::MAX_CONDITION) {
                return Err(Error::SingularConditioningBlock(format!(
                    "pivot {j} of the temporal factorization is {dj:e}"
                )));
            }
            if dj < -linalg::PSD_TOL * scale.max(1.0) {
                return Err(Error::NotPositiveSemidefinite {
                    min_eigenvalue: dj,
                    tolerance: linalg::PSD_TOL * scale,
                });
            }
            let dj = dj.max(0.0);
            d[j] = dj;
            for i in (j + 1)..n {
                let mut v = cov[(i, j)];
                for k in 0..j {
                    v -= g[(i, k)] * g[(j, k)] * d[k];
                }
                g[(i, j)] = v / dj;
            }
        }
        // cov = G D G^T with G unit lower; z = G (A mean + e) where A = G^{-1}.
        let a = linalg::unit_lower_inverse(&(-g));
        let mut strict = -&a;
        for i in 0..n {
            strict[(i, i)] = 0.0;
        }
        let intercept = &a * mean;
        Ok(Self {
            strict,
            intercept,
            var: d,
        })
    }

    /// Sequential model of a full coupling in interleaved order.
    pub fn factor_coupling(joint: &GaussianJoint) -> Result<Self> {
        let (mean, cov) = joint.interleaved()?;
        Self::factor(&mean, &cov)
    }

    /// Mean and covariance of the model, in the model's own order.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let g = linalg::unit_lower_inverse(&self.strict);
        let mean = &g * &self.intercept;
        let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * self.var[j].sqrt());
        let mut cov = &scaled * scaled.transpose();
        linalg::symmetrize(&mut cov);
        (mean, cov)
    }
}

/// Temporal factorization `prod_t pi(u_t | z_{1:t-1}) pi(y_t | u_{1:t}, y_{1:t-1})`.
pub fn disintegrate(joint: &GaussianJoint) -> Result<AutoregressiveForm> {
    AutoregressiveForm::from_triangular(&Triangular::factor_coupling(joint)?)
}

/// Inverse of [`disintegrate`]: assembles the joint law of the steps.
pub fn recompose(ar: &AutoregressiveForm) -> Result<GaussianJoint> {
    let horizon = ar.horizon();
    let (mean_il, cov_il) = ar.to_triangular().moments();
    // interleaved position of each block-order coordinate
    let layout = Layout::coupling(horizon);
    let pos: Vec<usize> = layout
        .coords()
        .iter()
        .map(Coord::interleaved_position)
        .collect();
    GaussianJoint::new(
        linalg::select_vec(&mean_il, &pos),
        linalg::select(&cov_il, &pos, &pos),
        layout,
    )
}

/// Law of `z_{t+1:T}` given `z_{1:t}`, both in interleaved order, by
/// substituting the later steps into one another. Empty when `t = T`.
pub fn future_given_past(ar: &AutoregressiveForm, t: usize) -> Result<ConditionalGaussian> {
    let horizon = ar.horizon();
    if t == 0 || t > horizon {
        return Err(Error::StepOutOfRange { step: t, horizon });
    }
    let tri = ar.to_triangular();
    let n = tri.dim();
    let p = 2 * t;
    let f = n - p;
    let l22 = tri.strict.view((p, p), (f, f)).clone_owned();
    let l21 = tri.strict.view((p, 0), (f, p)).clone_owned();
    let g22 = linalg::unit_lower_inverse(&l22);
    let coeff = &g22 * &l21;
    let intercept = &g22 * tri.intercept.rows(p, f);
    let scaled = DMatrix::from_fn(f, f, |i, j| g22[(i, j)] * tri.var[p + j].sqrt());
    let mut cov = &scaled * scaled.transpose();
    linalg::symmetrize(&mut cov);
    ConditionalGaussian::new(
        coeff,
        intercept,
        cov,
        Layout::new(interleaved_prefix(t))?,
        Layout::new(interleaved_range(t + 1, horizon))?,
    )
}

fn check_same_layout(p: &GaussianJoint, q: &GaussianJoint) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    if p.layout != q.layout {
        return Err(Error::LayoutMismatch("laws have different layouts".into()));
    }
    Ok(())
}

/// `KL(p || q)` between Gaussians. Infinite when `p` is degenerate.
pub fn kl_divergence(p: &GaussianJoint, q: &GaussianJoint) -> Result<f64> {
    check_same_layout(p, q)?;
    let d = p.dim() as f64;
    let fq = SpdFactor::new(&q.cov, "reference covariance")?;
    let ln_det_p = match p.cov.clone().cholesky() {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => return Ok(f64::INFINITY),
    };
    let trace = fq.solve(&p.cov).trace();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&fq.solve_vec(&diff));
    let kl = 0.5 * (trace - d + maha + fq.ln_det() - ln_det_p);
    if kl < -1e-9 {
        return Err(Error::NonFinite(format!("negative divergence {kl:e}")));
    }
    Ok(kl.max(0.0))
}

/// Max-abs difference over all mean and covariance entries.
pub fn joint_distance(p: &GaussianJoint, q: &GaussianJoint) -> Result<f64> {
    check_same_layout(p, q)?;
    let dm = (&p.mean - &q.mean).amax();
    let dc = (&p.cov - &q.cov).amax();
    Ok(dm.max(dc))
}
