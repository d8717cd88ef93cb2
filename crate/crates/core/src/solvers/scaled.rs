use nalgebra::{DMatrix, DVector};

use super::{lasso_fit, SolverConfig};
use crate::error::{invalid, Result};

/// Lower bound applied to the noise estimate.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ScaledLassoFit {
    pub beta: DVector<f64>,
    pub sigma: f64,
    /// Set when the residual collapsed and `sigma` was clamped at the floor.
    pub degenerate_noise: bool,
    pub iterations: usize,
}

/// Joint coefficient / noise-level estimate by alternating a lasso step at
/// penalty `σ·λ₀` with `σ ← ‖y − Xβ‖/√n`, until `σ` changes by at most
/// `tol` relative.
pub fn scaled_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda0: f64, cfg: &SolverConfig) -> Result<ScaledLassoFit> {
    cfg.validate()?;
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return invalid("scaled lasso needs lambda0 > 0");
    }
    let n = x.nrows() as f64;
    let p = x.ncols();
    let mut sigma = y.norm() / n.sqrt();
    let mut beta = DVector::zeros(p);
    if sigma <= SIGMA_FLOOR {
        return Ok(ScaledLassoFit {
            beta,
            sigma: SIGMA_FLOOR,
            degenerate_noise: true,
            iterations: 0,
        });
    }
    for iter in 1..=cfg.max_iter {
        let fit = lasso_fit(x, y, sigma * lambda0, cfg, Some(&beta))?;
        beta = fit.beta;
        let next = (y - x * &beta).norm() / n.sqrt();
        if next <= SIGMA_FLOOR {
            return Ok(ScaledLassoFit {
                beta,
                sigma: SIGMA_FLOOR,
                degenerate_noise: true,
                iterations: iter,
            });
        }
        let done = (next - sigma).abs() <= cfg.tol * next;
        sigma = next;
        if done {
            return Ok(ScaledLassoFit {
                beta,
                sigma,
                degenerate_noise: false,
                iterations: iter,
            });
        }
    }
    Err(crate::error::Error::Converge {
        solver: "scaled lasso",
        iterations: cfg.max_iter,
        residual: sigma,
    })
}
