//! Test-only helpers: random instances and direct KL minimizers used as
//! oracles for the projection formulas. Nothing here calls the solver.

#![allow(dead_code)]

use ecot_core::{GaussianJoint, Role};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_spd(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * rng.gen_range(0.3..1.0)
}

pub fn random_vec(rng: &mut StdRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
}

pub fn random_coupling(rng: &mut StdRng, horizon: usize) -> GaussianJoint {
    let n = 2 * horizon;
    GaussianJoint::coupling(random_vec(rng, n), random_spd(rng, n)).unwrap()
}

pub fn random_marginal(rng: &mut StdRng, role: Role, horizon: usize) -> GaussianJoint {
    GaussianJoint::marginal(role, random_vec(rng, horizon), random_spd(rng, horizon)).unwrap()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Max-abs difference over mean and covariance entries.
pub fn law_diff(
    mean_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mean_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> f64 {
    (mean_a - mean_b).amax().max((cov_a - cov_b).amax())
}

/// `KL(N(mp, cp) || N(mq, cq))` through explicit inverses and determinants.
pub fn gauss_kl(mp: &DVector<f64>, cp: &DMatrix<f64>, mq: &DVector<f64>, cq: &DMatrix<f64>) -> f64 {
    let Some(qi) = cq.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let dp = cp.determinant();
    if dp.is_nan() || dp <= 0.0 {
        return f64::INFINITY;
    }
    let d = mp.len() as f64;
    let diff = mq - mp;
    0.5 * ((&qi * cp).trace() - d + (diff.transpose() * &qi * &diff)[0] + cq.determinant().ln()
        - dp.ln())
}

fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimization with finite-difference gradients. Infeasible
/// points must evaluate to a non-finite value or `+inf`.
pub fn bfgs(f: &dyn Fn(&[f64]) -> f64, x0: Vec<f64>, gtol: f64) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    assert!(fx.is_finite(), "oracle start point is infeasible");
    let mut g = gradient(f, &x);
    let mut h = DMatrix::<f64>::identity(n, n);
    for _ in 0..20_000 {
        if g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < gtol {
            break;
        }
        let gv = DVector::from_column_slice(&g);
        let mut p: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        if dot(&p, &g) >= 0.0 {
            h = DMatrix::identity(n, n);
            p = g.iter().map(|v| -v).collect();
        }
        let slope = dot(&p, &g);
        let mut step = 1.0;
        let (x_new, f_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-20 {
                return x;
            }
        };
        let g_new = gradient(f, &x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-18 {
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &sv * yv.transpose() * rho;
            let right = &i - &yv * sv.transpose() * rho;
            h = &left * &h * &right + &sv * sv.transpose() * rho;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    x
}

/// Joint law in block order of `Y = L U + c + noise`, `U ~ N(mu_mean, mu_cov)`,
/// noise `N(0, s)` independent of `U`.
pub fn regression_joint(
    mu_mean: &DVector<f64>,
    mu_cov: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c: &DVector<f64>,
    s: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu_mean.len();
    let mut mean = DVector::zeros(2 * n);
    mean.rows_mut(0, n).copy_from(mu_mean);
    mean.rows_mut(n, n).copy_from(&(l * mu_mean + c));
    let cross = l * mu_cov;
    let mut cov = DMatrix::zeros(2 * n, 2 * n);
    cov.view_mut((0, 0), (n, n)).copy_from(mu_cov);
    cov.view_mut((n, 0), (n, n)).copy_from(&cross);
    cov.view_mut((0, n), (n, n)).copy_from(&cross.transpose());
    cov.view_mut((n, n), (n, n))
        .copy_from(&(&cross * l.transpose() + s));
    (mean, cov)
}

/// Fills an `n x n` matrix from parameters: lower triangle (including the
/// diagonal) row by row when `lower`, otherwise every entry row by row.
pub fn unpack(params: &[f64], n: usize, lower: bool) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        let cols = if lower { i + 1 } else { n };
        for j in 0..cols {
            m[(i, j)] = params[k];
            k += 1;
        }
    }
    m
}

pub fn n_params(n: usize, lower: bool) -> usize {
    if lower {
        n * (n + 1) / 2
    } else {
        n * n
    }
}

/// Minimizes `KL(pi || reference)` over couplings with input law `mu` and
/// free output law, written as `Y = L U + c + chol(S) W`; `L` is lower
/// triangular (non-anticipating) when `causal`, otherwise unrestricted.
pub fn minimize_over_input_law(
    reference: &GaussianJoint,
    mu: &GaussianJoint,
    causal: bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu.dim();
    let nl = n_params(n, causal);
    let ns = n_params(n, true);
    let build = |x: &[f64]| {
        let l = unpack(&x[..nl], n, causal);
        let c = DVector::from_column_slice(&x[nl..nl + n]);
        let mut chol = unpack(&x[nl + n..], n, true);
        for i in 0..n {
            chol[(i, i)] = chol[(i, i)].exp();
        }
        let s = &chol * chol.transpose();
        regression_joint(mu.mean(), mu.cov(), &l, &c, &s)
    };
    let objective = |x: &[f64]| {
        let (m, c) = build(x);
        gauss_kl(&m, &c, reference.mean(), reference.cov())
    };
    let x0 = vec![0.0; nl + n + ns];
    let x = bfgs(&objective, x0, 1e-8);
    build(&x)
}

/// Minimizes `KL(pi || reference)` over couplings of `mu` and `nu`, written
/// as `Y = L U + c + noise` with `c` and the noise law fixed by `nu`.
pub fn minimize_over_couplings(
    reference: &GaussianJoint,
    mu: &GaussianJoint,
    nu: &GaussianJoint,
    causal: bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu.dim();
    let nl = n_params(n, causal);
    let build = |x: &[f64]| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let l = unpack(x, n, causal);
        let c = nu.mean() - &l * mu.mean();
        let s = nu.cov() - &l * mu.cov() * l.transpose();
        s.clone().cholesky()?;
        Some(regression_joint(mu.mean(), mu.cov(), &l, &c, &s))
    };
    let objective = |x: &[f64]| match build(x) {
        Some((m, c)) => gauss_kl(&m, &c, reference.mean(), reference.cov()),
        None => f64::INFINITY,
    };
    let x = bfgs(&objective, vec![0.0; nl], 1e-9);
    build(&x).expect("oracle ended at an infeasible point")
}

/// Fixed two-step instance used by the oracle comparisons.
///
/// Input law: `u_1 ~ N(1, 1)`, `u_2 | u_1 ~ N(0.5 u_1, 0.75)` (AR(1), lag
/// coefficient 0.5). Output law: mean `(0, -0.3)`, covariance
/// `[[1.5, 0.4], [0.4, 0.8]]`. Reference: state-space model `F = 0.8, B = 1,
/// Q = 0.5, H = 1, R = 1` with zero initial state and input law `mu`.
pub struct SmallInstance {
    pub mu: GaussianJoint,
    pub nu: GaussianJoint,
    pub reference: GaussianJoint,
}

pub fn small_instance() -> SmallInstance {
    use ecot_core::{reference_from_state_space, StateSpaceSpec};
    use nalgebra::{dmatrix, dvector};
    let mu = GaussianJoint::marginal(
        Role::Input,
        dvector![1.0, 0.5],
        dmatrix![1.0, 0.5; 0.5, 1.0],
    )
    .unwrap();
    let nu = GaussianJoint::marginal(
        Role::Output,
        dvector![0.0, -0.3],
        dmatrix![1.5, 0.4; 0.4, 0.8],
    )
    .unwrap();
    let ss = StateSpaceSpec::new(0.8, 1.0, 0.5, 1.0, 1.0, 2);
    let reference = reference_from_state_space(&ss, &mu).unwrap();
    SmallInstance { mu, nu, reference }
}

/// A non-causal two-step coupling with full cross-dependence.
pub fn anticipating_coupling() -> GaussianJoint {
    use nalgebra::{dmatrix, dvector};
    let a = dmatrix![
        1.0, 0.0, 0.0, 0.0;
        0.4, 0.9, 0.0, 0.0;
        0.7, -0.3, 1.1, 0.0;
        -0.2, 0.5, 0.6, 0.8
    ];
    let cov = &a * a.transpose() + DMatrix::identity(4, 4) * 0.1;
    GaussianJoint::coupling(dvector![0.3, -0.4, 1.2, 0.5], cov).unwrap()
}
