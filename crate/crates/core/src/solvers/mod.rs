//! Convex-optimization kernels, all driven by coordinate descent.

mod cv;
mod glasso;
mod lasso;
mod mprogram;
mod scaled;

pub use cv::{default_lambda_grid, fold_assignment, glasso_cv, heldout_loglik, CvResult};
pub use glasso::{glasso, glasso_path, GlassoFit};
pub use lasso::{lasso, lasso_fit, lasso_kkt_residual, soft_threshold, LassoFit};
pub use mprogram::{m_program, MProgram};
pub use scaled::{scaled_lasso, ScaledLassoFit, SIGMA_FLOOR};

pub(crate) use lasso::cd_quadratic;
pub(crate) use mprogram::diagonal_inverse;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Symmetric covariance with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::Shape(format!(
                "covariance must be square and nonempty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !crate::linalg::all_finite(&values) {
            return invalid("covariance has non-finite entries");
        }
        let d = values.nrows();
        let scale = values.amax().max(f64::MIN_POSITIVE);
        for j in 0..d {
            if values[(j, j)] <= 0.0 {
                return invalid(format!("covariance diagonal entry {j} is not positive"));
            }
            for k in (j + 1)..d {
                if (values[(j, k)] - values[(k, j)]).abs() > 1e-12 * scale {
                    return invalid(format!("covariance is not symmetric at ({j}, {k})"));
                }
            }
        }
        Ok(Self(values))
    }

    /// Sample second-moment matrix `XᵀX / n`.
    pub fn from_data(x: &DMatrix<f64>) -> Result<Self> {
        Self::new(crate::linalg::gram(x))
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Shared solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// ℓ₁ penalty; `0` lets callers pick their default.
    pub lambda: f64,
    /// M-program constraint level; `0` selects the default `a·sqrt(log d / n)`.
    pub mu: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub cv_folds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            mu: 0.0,
            max_iter: 10_000,
            tol: 1e-7,
            cv_folds: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return invalid("tol must be positive");
        }
        if self.max_iter == 0 {
            return invalid("max_iter must be at least 1");
        }
        if !(self.lambda >= 0.0) || !(self.mu >= 0.0) {
            return invalid("lambda and mu must be nonnegative");
        }
        Ok(())
    }
}
