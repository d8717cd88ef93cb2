//! Decorrelating matrix for the debiased lasso.
//!
//! Row `i` solves `min mᵀΣm  s.t. ‖Σm − eᵢ‖∞ ≤ μ`. Its Lagrange dual is the
//! lasso-type problem `min ½βᵀΣβ − eᵢᵀβ + μ‖β‖₁`, whose minimizer is primal
//! optimal; that problem is solved by coordinate descent.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{cd_quadratic, CovMatrix, SolverConfig};
use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct MProgram {
    pub m: DMatrix<f64>,
    /// Rows that were infeasible and replaced by `eᵢ / Σᵢᵢ`.
    pub fallback: Vec<bool>,
}

pub fn m_program(sigma_hat: &CovMatrix, mu: f64, cfg: &SolverConfig) -> Result<MProgram> {
    cfg.validate()?;
    if !(mu > 0.0) || !mu.is_finite() {
        return invalid("m_program needs mu > 0");
    }
    let s = sigma_hat.matrix();
    let d = s.nrows();
    let tol = cfg.tol.min(1e-10);
    let rows: Vec<(DVector<f64>, bool)> = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            let mut m = DVector::zeros(d);
            let solved = cd_quadratic(s, &e, mu, &mut m, None, tol, cfg.max_iter).is_ok();
            if solved && row_feasible(s, &m, i, mu) {
                (m, false)
            } else {
                let mut fb = DVector::zeros(d);
                fb[i] = 1.0 / s[(i, i)];
                (fb, true)
            }
        })
        .collect();
    let mut m = DMatrix::zeros(d, d);
    let mut fallback = Vec::with_capacity(d);
    for (i, (row, fb)) in rows.into_iter().enumerate() {
        m.set_row(i, &row.transpose());
        fallback.push(fb);
    }
    Ok(MProgram { m, fallback })
}

/// Diagonal fallback used when the program has no usable solution.
pub(crate) fn diagonal_inverse(sigma_hat: &CovMatrix) -> MProgram {
    let s = sigma_hat.matrix();
    let d = s.nrows();
    let m = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
    MProgram {
        m,
        fallback: vec![true; d],
    }
}

fn row_feasible(s: &DMatrix<f64>, m: &DVector<f64>, i: usize, mu: f64) -> bool {
    let mut r = s * m;
    r[i] -= 1.0;
    r.amax() <= mu + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_shrinks_by_mu() {
        let s = CovMatrix::new(DMatrix::identity(4, 4)).unwrap();
        for mu in [0.05, 0.3, 0.9] {
            let r = m_program(&s, mu, &SolverConfig::default()).unwrap();
            let expect = DMatrix::<f64>::identity(4, 4) * (1.0 - mu);
            assert!((r.m - expect).amax() < 1e-12, "mu = {mu}");
            assert!(r.fallback.iter().all(|f| !f));
        }
    }

    #[test]
    fn slack_constraint_gives_zero() {
        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let r = m_program(&s, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.m, DMatrix::zeros(2, 2));
    }

    #[test]
    fn rank_deficient_tiny_mu_falls_back() {
        // Σ = 11ᵀ: e₁ is outside the range, so tiny μ is infeasible.
        let s = CovMatrix::new(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let cfg = SolverConfig {
            max_iter: 2_000,
            ..Default::default()
        };
        let r = m_program(&s, 1e-3, &cfg).unwrap();
        assert!(r.fallback.iter().all(|&f| f));
        assert_eq!(r.m[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_nonpositive_mu() {
        let s = CovMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert!(m_program(&s, 0.0, &SolverConfig::default()).is_err());
    }
}
