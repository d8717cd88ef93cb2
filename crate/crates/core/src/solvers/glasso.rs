//! Graphical lasso by block coordinate descent over columns of the working
//! covariance `W`. Only off-diagonal entries of the precision are penalized,
//! so `W_jj = S_jj` throughout.

use nalgebra::{DMatrix, DVector};

use super::{cd_quadratic, CovMatrix, SolverConfig};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub theta: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub lambda: f64,
    pub sweeps: usize,
    /// Column `j` holds the lasso coefficients of column `j` (zero at `j`);
    /// reused as a warm start along a path.
    coefs: DMatrix<f64>,
}

/// Penalized Gaussian likelihood precision estimate at a single `lambda`.
pub fn glasso(s: &CovMatrix, lambda: f64, cfg: &SolverConfig) -> Result<GlassoFit> {
    solve(s, lambda, cfg, None)
}

/// Fits along `lambdas` (any order), warm-starting each fit from the previous
/// one. A failure at one grid point is reported in place and the next point
/// restarts cold.
pub fn glasso_path(s: &CovMatrix, lambdas: &[f64], cfg: &SolverConfig) -> Vec<Result<GlassoFit>> {
    let mut out = Vec::with_capacity(lambdas.len());
    let mut prev: Option<GlassoFit> = None;
    for &lam in lambdas {
        let fit = solve(s, lam, cfg, prev.as_ref());
        prev = fit.as_ref().ok().cloned();
        out.push(fit);
    }
    out
}

fn solve(s: &CovMatrix, lambda: f64, cfg: &SolverConfig, warm: Option<&GlassoFit>) -> Result<GlassoFit> {
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid("glasso lambda must be finite and nonnegative");
    }
    let s = s.matrix();
    let d = s.nrows();
    let (mut w, mut coefs) = match warm {
        Some(f) if f.w.nrows() == d => (f.w.clone(), f.coefs.clone()),
        _ => (s.clone(), DMatrix::zeros(d, d)),
    };
    for j in 0..d {
        w[(j, j)] = s[(j, j)];
    }
    if d == 1 {
        let theta = DMatrix::from_element(1, 1, 1.0 / s[(0, 0)]);
        return Ok(GlassoFit {
            theta,
            w,
            lambda,
            sweeps: 0,
            coefs,
        });
    }

    let mut beta = DVector::zeros(d);
    let mut sweeps = 0usize;
    let mut max_delta = f64::INFINITY;
    let inner_cap = cfg.max_iter;
    while sweeps < cfg.max_iter {
        sweeps += 1;
        max_delta = 0.0;
        for j in 0..d {
            beta.copy_from(&coefs.column(j));
            let b = s.column(j).into_owned();
            cd_quadratic(&w, &b, lambda, &mut beta, Some(j), cfg.tol, inner_cap)?;
            // w12 = W_{-j,-j} β, with β_j = 0.
            let mut w12 = DVector::zeros(d);
            for l in 0..d {
                let bl = beta[l];
                if bl != 0.0 {
                    w12.axpy(bl, &w.column(l), 1.0);
                }
            }
            for k in 0..d {
                if k == j {
                    continue;
                }
                let delta = (w12[k] - w[(k, j)]).abs();
                max_delta = max_delta.max(delta);
                w[(k, j)] = w12[k];
                w[(j, k)] = w12[k];
            }
            coefs.set_column(j, &beta);
        }
        if max_delta <= cfg.tol {
            break;
        }
    }
    if max_delta > cfg.tol {
        return Err(Error::Converge {
            solver: "glasso",
            iterations: sweeps,
            residual: max_delta,
        });
    }

    let mut theta = DMatrix::zeros(d, d);
    for j in 0..d {
        let col = coefs.column(j);
        let mut cross = 0.0;
        for k in 0..d {
            if k != j {
                cross += w[(k, j)] * col[k];
            }
        }
        let denom = w[(j, j)] - cross;
        if !(denom > 0.0) {
            return Err(Error::Converge {
                solver: "glasso",
                iterations: sweeps,
                residual: denom,
            });
        }
        let tjj = 1.0 / denom;
        theta[(j, j)] = tjj;
        for k in 0..d {
            if k != j {
                theta[(k, j)] = -col[k] * tjj;
            }
        }
    }
    let theta = crate::linalg::symmetrize(&theta);
    if !crate::linalg::is_pd(&theta) {
        return Err(Error::Converge {
            solver: "glasso",
            iterations: sweeps,
            residual: crate::linalg::min_eigenvalue(&theta),
        });
    }
    Ok(GlassoFit {
        theta,
        w,
        lambda,
        sweeps,
        coefs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_without_penalty() {
        let s = CovMatrix::new(DMatrix::identity(5, 5)).unwrap();
        let fit = glasso(&s, 0.0, &SolverConfig::default()).unwrap();
        assert!((fit.theta - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_covariance_stays_diagonal() {
        let s = CovMatrix::new(DMatrix::identity(5, 5)).unwrap();
        let fit = glasso(&s, 0.2, &SolverConfig::default()).unwrap();
        assert!((fit.theta - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn unpenalized_fit_inverts_covariance() {
        let s = DMatrix::from_fn(4, 4, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
        let cov = CovMatrix::new(s.clone()).unwrap();
        let cfg = SolverConfig {
            tol: 1e-12,
            ..Default::default()
        };
        let fit = glasso(&cov, 0.0, &cfg).unwrap();
        let inv = s.try_inverse().unwrap();
        assert!((fit.theta - inv).amax() < 1e-8);
    }

    #[test]
    fn output_is_exactly_symmetric() {
        let s = DMatrix::from_fn(6, 6, |i, j| {
            0.3f64.powi((i as i32 - j as i32).abs()) + if i == j { 0.2 } else { 0.0 }
        });
        let fit = glasso(&CovMatrix::new(s).unwrap(), 0.05, &SolverConfig::default()).unwrap();
        assert_eq!(fit.theta, fit.theta.transpose());
    }
}
