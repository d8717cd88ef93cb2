use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::error::{invalid, Error, Result};

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Largest violation of the subgradient optimality conditions of
/// `(1/2n)‖y − Xβ‖² + λ‖β‖₁`.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let grad = x.tr_mul(&(x * beta - y)) / n;
    kkt_from_gradient(&grad, beta, lambda, None)
}

fn kkt_from_gradient(grad: &DVector<f64>, beta: &DVector<f64>, lambda: f64, skip: Option<usize>) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..beta.len() {
        if Some(k) == skip {
            continue;
        }
        let g = grad[k];
        let b = beta[k];
        let v = if b > 0.0 {
            (g + lambda).abs()
        } else if b < 0.0 {
            (g - lambda).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Lasso by cyclic coordinate descent, returning only the coefficients.
pub fn lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, cfg: &SolverConfig) -> Result<DVector<f64>> {
    lasso_fit(x, y, lambda, cfg, None).map(|f| f.beta)
}

/// Lasso with optional warm start. Stops once the KKT residual is at most
/// `cfg.tol`.
pub fn lasso_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    cfg.validate()?;
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return invalid("lasso needs n >= 1 and p >= 1");
    }
    if y.len() != n {
        return Err(Error::Shape(format!("y has {} rows, X has {n}", y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid("lambda must be finite and nonnegative");
    }
    if !crate::linalg::all_finite(x) || y.iter().any(|v| !v.is_finite()) {
        return invalid("lasso input contains non-finite values");
    }
    let nf = n as f64;
    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / nf).collect();
    let mut beta = match warm {
        Some(w) if w.len() == p => w.clone(),
        _ => DVector::zeros(p),
    };
    let mut resid = y - x * &beta;
    let mut kkt = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        let mut max_change = 0.0f64;
        for k in 0..p {
            let ck = col_sq[k];
            if ck == 0.0 {
                beta[k] = 0.0;
                continue;
            }
            let col = x.column(k);
            let z = col.dot(&resid) / nf + ck * beta[k];
            let updated = soft_threshold(z, lambda) / ck;
            let delta = updated - beta[k];
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                beta[k] = updated;
                max_change = max_change.max(delta.abs() * ck.sqrt());
            }
        }
        if max_change <= cfg.tol {
            // Refresh the residual to shed accumulated round-off.
            resid = y - x * &beta;
            let grad = -(x.tr_mul(&resid)) / nf;
            kkt = kkt_from_gradient(&grad, &beta, lambda, None);
            if kkt <= cfg.tol {
                return Ok(LassoFit {
                    beta,
                    iterations: iter,
                    kkt_residual: kkt,
                });
            }
        }
    }
    Err(Error::Converge {
        solver: "lasso",
        iterations: cfg.max_iter,
        residual: kkt,
    })
}

/// Coordinate descent for `½βᵀQβ − bᵀβ + λ‖β‖₁` with coordinate `skip`
/// pinned at zero. `beta` is the warm start and receives the solution.
/// Returns `(sweeps, kkt_residual)`.
pub(crate) fn cd_quadratic(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    beta: &mut DVector<f64>,
    skip: Option<usize>,
    tol: f64,
    max_iter: usize,
) -> Result<(usize, f64)> {
    let d = b.len();
    if let Some(s) = skip {
        beta[s] = 0.0;
    }
    // grad = Qβ − b over the nonzero support only.
    let mut grad = -b.clone();
    for l in 0..d {
        let bl = beta[l];
        if bl != 0.0 {
            grad.axpy(bl, &q.column(l), 1.0);
        }
    }
    let mut active: Vec<usize> = Vec::with_capacity(d);
    let mut sweeps = 0usize;
    let mut kkt = f64::INFINITY;

    let update = |k: usize, beta: &mut DVector<f64>, grad: &mut DVector<f64>| -> f64 {
        let qkk = q[(k, k)];
        if qkk <= 0.0 {
            return 0.0;
        }
        let old = beta[k];
        let new = soft_threshold(qkk * old - grad[k], lambda) / qkk;
        let delta = new - old;
        if delta != 0.0 {
            beta[k] = new;
            grad.axpy(delta, &q.column(k), 1.0);
        }
        delta.abs() * qkk.sqrt()
    };

    while sweeps < max_iter {
        // Full pass over every free coordinate.
        sweeps += 1;
        let mut max_change = 0.0f64;
        for k in 0..d {
            if Some(k) == skip {
                continue;
            }
            max_change = max_change.max(update(k, beta, &mut grad));
        }
        // Inner passes over the active set.
        active.clear();
        active.extend((0..d).filter(|&k| beta[k] != 0.0 && Some(k) != skip));
        while max_change > tol && sweeps < max_iter {
            sweeps += 1;
            max_change = 0.0;
            for &k in &active {
                max_change = max_change.max(update(k, beta, &mut grad));
            }
        }
        if beta.amax() > 1e12 {
            return Err(Error::Converge {
                solver: "coordinate descent",
                iterations: sweeps,
                residual: f64::INFINITY,
            });
        }
        kkt = kkt_from_gradient(&grad, beta, lambda, skip);
        if kkt <= tol {
            return Ok((sweeps, kkt));
        }
    }
    Err(Error::Converge {
        solver: "coordinate descent",
        iterations: sweeps,
        residual: kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> SolverConfig {
        SolverConfig {
            tol: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn scalar_soft_threshold_closed_form() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_element(4, 1.0);
        let b = lasso(&x, &y, 0.5, &tight()).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_design_without_penalty_is_least_squares() {
        // Columns orthogonal with squared norm n.
        let n = 4;
        let x = DMatrix::from_row_slice(n, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let y = DVector::from_vec(vec![3.0, -1.0, 2.0, 0.5]);
        let b = lasso(&x, &y, 0.0, &tight()).unwrap();
        let ls = x.tr_mul(&y) / n as f64;
        assert!((b - ls).amax() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = DMatrix::from_element(3, 2, 1.0);
        x[(1, 1)] = f64::NAN;
        let y = DVector::zeros(3);
        assert!(matches!(
            lasso(&x, &y, 0.1, &SolverConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_convergence_failure() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.9, 0.5, 0.6, -1.0, -0.8]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.3]);
        let cfg = SolverConfig {
            max_iter: 1,
            tol: 1e-14,
            ..Default::default()
        };
        match lasso(&x, &y, 0.01, &cfg) {
            Err(Error::Converge { iterations, .. }) => assert_eq!(iterations, 1),
            other => panic!("expected Converge, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_form_matches_data_form() {
        let x = DMatrix::from_fn(30, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let y = DVector::from_fn(30, |i, _| ((i * 5) % 7) as f64 / 3.0 - 1.0);
        let n = 30.0;
        let q = x.tr_mul(&x) / n;
        let b = x.tr_mul(&y) / n;
        let mut beta = DVector::zeros(5);
        cd_quadratic(&q, &b, 0.05, &mut beta, None, 1e-12, 100_000).unwrap();
        let direct = lasso(&x, &y, 0.05, &tight()).unwrap();
        assert!((beta - direct).amax() < 1e-9);
    }
}
