//! Small dense helpers shared by the Gaussian algebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted before a covariance is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues down to `-PSD_TOL * ||cov||` are treated as roundoff and clipped.
pub const PSD_TOL: f64 = 1e-10;
/// Largest condition number accepted for a conditioning block.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Checks symmetry and positive semidefiniteness, symmetrizes in place and
/// clips eigenvalues that are negative only by roundoff.
pub fn sanitize_covariance(m: &mut DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance entry".into()));
    }
    let scale = max_abs(m);
    let n = m.nrows();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    symmetrize(m);
    if n == 0 || scale == 0.0 {
        return Ok(());
    }
    // Cheap path: a successful Cholesky proves positive definiteness.
    if m.clone().cholesky().is_some() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(m.clone());
    let norm = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let tolerance = PSD_TOL * norm;
    if min < -tolerance {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            tolerance,
        });
    }
    if min < 0.0 {
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let mut rebuilt =
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        symmetrize(&mut rebuilt);
        *m = rebuilt;
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive definite block, with a guard on
/// the condition number estimated from the factor's diagonal.
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(block: &DMatrix<f64>, what: &str) -> Result<Self> {
        let n = block.nrows();
        if n == 0 {
            return Ok(Self {
                chol: DMatrix::<f64>::zeros(0, 0).cholesky().expect("empty"),
            });
        }
        let chol = block.clone().cholesky().ok_or_else(|| {
            Error::SingularConditioningBlock(format!("{what}: not positive definite"))
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
        // cond(A) >= (max l_ii / min l_ii)^2
        if lo == 0.0 || (hi / lo).powi(2) > MAX_CONDITION {
            return Err(Error::SingularConditioningBlock(format!(
                "{what}: condition estimate {:e}",
                if lo == 0.0 {
                    f64::INFINITY
                } else {
                    (hi / lo).powi(2)
                }
            )));
        }
        Ok(Self { chol })
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        if rhs.nrows() == 0 {
            return rhs.clone();
        }
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        if rhs.nrows() == 0 {
            return rhs.clone();
        }
        self.chol.solve(rhs)
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Inverse of a unit lower-triangular matrix `I - strict`, where `strict`
/// holds the strictly lower part.
pub fn unit_lower_inverse(strict: &DMatrix<f64>) -> DMatrix<f64> {
    let n = strict.nrows();
    let mut g = DMatrix::<f64>::identity(n, n);
    // row i of G: e_i + sum_{j<i} strict[i,j] * G[j,:]
    for i in 0..n {
        for j in 0..i {
            let c = strict[(i, j)];
            if c == 0.0 {
                continue;
            }
            for k in 0..=j {
                let v = g[(j, k)];
                g[(i, k)] += c * v;
            }
        }
    }
    g
}

pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
