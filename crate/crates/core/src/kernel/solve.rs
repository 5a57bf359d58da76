use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

/// Largest kernel dimension accepted by the direct solver.
pub const MAX_SOLVE_DIM: usize = 5000;

/// `y_star` solves `(I / lambda + K) y_star = K Y`, equivalently
/// `y_star = lambda K (Y - y_star)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub y_star: DVector<f64>,
    pub lambda: f64,
    /// `|| y_star - lambda K (Y - y_star) ||_2`
    pub residual_norm: f64,
}

/// Cholesky factor of `I / lambda + K`, reused across right-hand sides.
///
/// The symmetric part of `K` is factored. With `||K|| <= 1` and
/// `lambda < 1` the matrix has eigenvalues at least `1 / lambda - 1 > 0`.
pub struct KrrSolver {
    kernel: DMatrix<f64>,
    lambda: f64,
    factor: Cholesky<f64, Dyn>,
}

impl KrrSolver {
    pub fn new(kernel: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("lambda {lambda} outside (0, 1)")));
        }
        let n = kernel.nrows();
        if kernel.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: kernel.ncols(),
            });
        }
        if n > MAX_SOLVE_DIM {
            return Err(Error::Config(format!(
                "kernel dimension {n} exceeds the direct solve limit {MAX_SOLVE_DIM}"
            )));
        }
        let sym = (kernel + kernel.transpose()) * 0.5;
        let system = &sym + DMatrix::identity(n, n) / lambda;
        let factor = Cholesky::new(system).ok_or(Error::NotPositiveDefinite)?;
        Ok(KrrSolver {
            kernel: sym,
            lambda,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(I / lambda + K)^{-1} rhs`
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(rhs.len())?;
        Ok(self.factor.solve(rhs))
    }

    pub fn fixed_point(&self, y: &DVector<f64>) -> Result<FixedPoint> {
        self.check_len(y.len())?;
        let y_star = self.factor.solve(&(&self.kernel * y));
        let residual = &y_star - (&self.kernel * (y - &y_star)) * self.lambda;
        Ok(FixedPoint {
            residual_norm: residual.norm(),
            y_star,
            lambda: self.lambda,
        })
    }

    /// `k_x^T (I / lambda + K)^{-1} Y`
    pub fn predict(&self, k_x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_len(k_x.len())?;
        Ok(k_x.dot(&self.solve(y)?))
    }

    /// Dense inverse, for small diagnostic problems.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

pub fn fixed_point(kernel: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<FixedPoint> {
    KrrSolver::new(kernel, lambda)?.fixed_point(y)
}

pub fn krr_predict(
    k_x: &DVector<f64>,
    kernel: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    KrrSolver::new(kernel, lambda)?.predict(k_x, y)
}

/// Probability that a uniform subsample of `subsample_size` out of `n` misses
/// every one of the `leaf_size` points of a leaf:
/// `C(n - leaf_size, subsample_size) / C(n, subsample_size)`.
pub fn missing_leaf_probability(n: u64, leaf_size: u64, subsample_size: u64) -> Result<f64> {
    if leaf_size > n {
        return Err(Error::Config(format!(
            "leaf size {leaf_size} exceeds n = {n}"
        )));
    }
    if subsample_size > n - leaf_size {
        return Ok(0.0);
    }
    Ok((ln_binomial(n - leaf_size, subsample_size) - ln_binomial(n, subsample_size)).exp())
}
