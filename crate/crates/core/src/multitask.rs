//! Hub-response selection in multitask regression `Y = XΘᵀ + E`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::quantile::{gaussian_quantile_ensemble, BootstrapEnsemble};
use crate::select::{startrek, EnsembleProvider, HypothesisConfig, RowEnsemble, SelectionResult};
use crate::solvers::{m_program, scaled_lasso, CovMatrix, SolverConfig};

/// Constant in the lasso level `λ₀ = c·sqrt(log d₂ / n)`.
pub const LAMBDA_CONST: f64 = 1.1;
/// Constant in the M-program level `μ = a·sqrt(log d₂ / n)`.
pub const MU_CONST: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct MultitaskFit {
    /// Debiased coefficients, one response per row (d₁ × d₂).
    pub theta_d: DMatrix<f64>,
    /// Scaled-lasso coefficients, same layout.
    pub theta_hat: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub degenerate_noise: Vec<bool>,
    pub m: DMatrix<f64>,
    pub m_fallback: Vec<bool>,
    pub sigma_hat: CovMatrix,
    pub n: usize,
    pub lambda0: f64,
    pub mu: f64,
}

/// `sqrt(log d₂ / n)`, or `1/sqrt(n)` when `d₂ = 1` and the log vanishes.
fn rate(d2: usize, n: usize) -> f64 {
    let l = (d2 as f64).ln();
    if l > 0.0 {
        (l / n as f64).sqrt()
    } else {
        1.0 / (n as f64).sqrt()
    }
}

pub fn fit_multitask(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SolverConfig) -> Result<MultitaskFit> {
    cfg.validate()?;
    let (n, d2) = x.shape();
    if n < 2 {
        return invalid("multitask fit needs n >= 2");
    }
    if y.nrows() != n {
        return Err(Error::Shape(format!("Y has {} rows, X has {n}", y.nrows())));
    }
    if y.ncols() == 0 || d2 == 0 {
        return invalid("X and Y need at least one column");
    }
    if !crate::linalg::all_finite(x) || !crate::linalg::all_finite(y) {
        return invalid("multitask input contains non-finite values");
    }
    let sigma_hat = CovMatrix::from_data(x)?;
    let lambda0 = if cfg.lambda > 0.0 {
        cfg.lambda
    } else {
        LAMBDA_CONST * rate(d2, n)
    };
    let mu = if cfg.mu > 0.0 {
        cfg.mu
    } else {
        MU_CONST * (d2 as f64).ln().max(0.0).sqrt() / (n as f64).sqrt()
    };
    let mp = if mu > 0.0 {
        m_program(&sigma_hat, mu, cfg)?
    } else {
        crate::solvers::diagonal_inverse(&sigma_hat)
    };

    let nf = n as f64;
    let fits = (0..y.ncols())
        .into_par_iter()
        .map(|j| {
            let yj = y.column(j).into_owned();
            let fit = scaled_lasso(x, &yj, lambda0, cfg)?;
            let resid = &yj - x * &fit.beta;
            let debiased = &fit.beta + &mp.m * (x.tr_mul(&resid) / nf);
            Ok((fit, debiased))
        })
        .collect::<Result<Vec<_>>>()?;

    let d1 = y.ncols();
    let mut theta_d = DMatrix::zeros(d1, d2);
    let mut theta_hat = DMatrix::zeros(d1, d2);
    let mut sigma = DVector::zeros(d1);
    let mut degenerate_noise = Vec::with_capacity(d1);
    for (j, (fit, debiased)) in fits.into_iter().enumerate() {
        theta_d.set_row(j, &debiased.transpose());
        theta_hat.set_row(j, &fit.beta.transpose());
        sigma[j] = fit.sigma;
        degenerate_noise.push(fit.degenerate_noise);
    }
    Ok(MultitaskFit {
        theta_d,
        theta_hat,
        sigma,
        degenerate_noise,
        m: mp.m,
        m_fallback: mp.fallback,
        sigma_hat,
        n,
        lambda0,
        mu,
    })
}

/// Gaussian rows `N(0, σ̂_j² MΣ̂Mᵀ)`, drawn once at unit scale and rescaled
/// per response.
pub struct MultitaskGaussian {
    base: BootstrapEnsemble,
    sigma: DVector<f64>,
}

impl MultitaskGaussian {
    pub fn new(fit: &MultitaskFit, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return invalid("B must be at least 1");
        }
        let base = gaussian_quantile_ensemble(&fit.m, &fit.sigma_hat, 1.0, b, seed)?;
        Ok(Self {
            base,
            sigma: fit.sigma.clone(),
        })
    }
}

impl EnsembleProvider for MultitaskGaussian {
    fn row(&self, j: usize) -> Result<RowEnsemble> {
        if j >= self.sigma.len() {
            return invalid(format!("response {j} out of range"));
        }
        Ok(RowEnsemble {
            others: (0..self.base.n_edges()).collect(),
            ensemble: Arc::new(self.base.scaled(self.sigma[j])),
        })
    }
}

pub fn select_hub_responses(
    fit: &MultitaskFit,
    cfg: &HypothesisConfig,
    b: usize,
    seed: u64,
) -> Result<SelectionResult> {
    cfg.validate(fit.theta_d.ncols())?;
    let provider = MultitaskGaussian::new(fit, b, seed)?;
    startrek(&fit.theta_d, &provider, cfg, fit.n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_noiseless_debiasing_is_exact() {
        let n = 10;
        let x = DMatrix::from_element(n, 1, 1.0);
        let y = DMatrix::from_element(n, 1, 2.0);
        let fit = fit_multitask(&x, &y, &SolverConfig::default()).unwrap();
        assert!((fit.theta_d[(0, 0)] - 2.0).abs() < 1e-6);
        assert!(fit.sigma[0] > 0.0);
        assert!((fit.m[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_design_mixes_lasso_and_marginal() {
        // XᵀX/n = I, so M = (1 − μ)I and Θ̃ᵈ = μΘ̂ + (1 − μ)XᵀY/n.
        let n = 8;
        let d2 = 4;
        let x = DMatrix::from_fn(n, d2, |i, k| {
            let sign = if (i >> k.min(2)) & 1 == 0 { 1.0 } else { -1.0 };
            if k == 3 {
                if (i ^ (i >> 1) ^ (i >> 2)) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                sign
            }
        });
        let g = x.tr_mul(&x) / n as f64;
        assert!((g - DMatrix::<f64>::identity(d2, d2)).amax() < 1e-12);
        let y = DMatrix::from_fn(n, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let fit = fit_multitask(&x, &y, &SolverConfig::default()).unwrap();
        let marg = (x.tr_mul(&y) / n as f64).transpose();
        let mu = fit.mu;
        let expect = &fit.theta_hat * mu + marg * (1.0 - mu);
        assert!((fit.theta_d - expect).amax() < 1e-6);
    }

    #[test]
    fn zero_rows_select_nothing() {
        let n = 30;
        let x = DMatrix::from_fn(n, 5, |i, k| (((i * 7 + k * 11) % 13) as f64 - 6.0) / 3.0);
        let y = DMatrix::from_fn(n, 4, |i, j| (((i * 5 + j * 3) % 11) as f64 - 5.0) / 2.0);
        let mut fit = fit_multitask(&x, &y, &SolverConfig::default()).unwrap();
        fit.theta_d.fill(0.0);
        let r = select_hub_responses(&fit, &HypothesisConfig { k_tau: 2, q: 0.1 }, 300, 3).unwrap();
        assert!(r.alpha.iter().all(|&a| a == 1.0));
        assert!(r.selected.is_empty());
    }
}
