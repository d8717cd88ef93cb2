//! One-step debiasing of a precision estimate and the per-observation score
//! vectors that drive the multiplier bootstrap.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::CovMatrix;

/// An unordered-or-ordered node pair `(j, k)`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebiasedMatrix {
    /// One-step estimate, symmetrized.
    pub theta_d: DMatrix<f64>,
    /// Standardized estimate with unit diagonal.
    pub theta_std: DMatrix<f64>,
    pub theta_raw: DMatrix<f64>,
    pub n: usize,
}

/// Standardizes a precision matrix to unit diagonal.
pub fn standardize(theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = theta.nrows();
    for j in 0..d {
        if !(theta[(j, j)] > 0.0) {
            return Err(Error::DegenerateDenominator { index: j });
        }
    }
    let mut out = DMatrix::from_fn(d, d, |j, k| theta[(j, k)] / (theta[(j, j)] * theta[(k, k)]).sqrt());
    for j in 0..d {
        out[(j, j)] = 1.0;
    }
    Ok(out)
}

/// Raw (unsymmetrized) one-step estimate
/// `Θ̂ᵈ_jk = Θ̂_jk − Θ̂ⱼᵀ(Σ̂Θ̂ₖ − eₖ) / (Θ̂ⱼᵀΣ̂ⱼ)`.
pub fn onestep_raw(theta_hat: &DMatrix<f64>, sigma_hat: &CovMatrix) -> Result<DMatrix<f64>> {
    let s = sigma_hat.matrix();
    let d = s.nrows();
    if theta_hat.shape() != (d, d) {
        return Err(Error::Shape(format!(
            "theta is {:?}, covariance is {d}x{d}",
            theta_hat.shape()
        )));
    }
    for j in 0..d {
        if !(theta_hat[(j, j)] > 0.0) {
            return Err(Error::DegenerateDenominator { index: j });
        }
    }
    let mut resid = s * theta_hat;
    for k in 0..d {
        resid[(k, k)] -= 1.0;
    }
    let numer = theta_hat * resid;
    let mut out = theta_hat.clone();
    for j in 0..d {
        let denom = theta_hat.row(j).dot(&s.column(j).transpose());
        if denom.abs() < 1e-10 {
            return Err(Error::DegenerateDenominator { index: j });
        }
        for k in 0..d {
            out[(j, k)] -= numer[(j, k)] / denom;
        }
    }
    Ok(out)
}

/// One-step estimate, symmetrized as `(A + Aᵀ)/2`, then standardized.
pub fn onestep_debias(theta_hat: &DMatrix<f64>, sigma_hat: &CovMatrix, n: usize) -> Result<DebiasedMatrix> {
    let raw = onestep_raw(theta_hat, sigma_hat)?;
    let theta_d = crate::linalg::symmetrize(&raw);
    let theta_std = standardize(&theta_d)?;
    if !crate::linalg::all_finite(&theta_std) {
        return Err(Error::InvalidInput("debiased estimate is not finite".into()));
    }
    Ok(DebiasedMatrix {
        theta_d,
        theta_std,
        theta_raw: theta_hat.clone(),
        n,
    })
}

/// Score vectors, one column per edge:
/// `scores[(i, e)] = Θ̂ⱼᵀ(XᵢXᵢᵀΘ̂ₖ − eₖ) / sqrt(Θ̂_jj Θ̂_kk)` for `e = (j, k)`.
#[derive(Debug, Clone)]
pub struct ScoreTensor {
    pub scores: DMatrix<f64>,
    pub edges: Vec<Edge>,
}

impl ScoreTensor {
    pub fn n(&self) -> usize {
        self.scores.nrows()
    }
}

pub fn build_scores(theta_hat: &DMatrix<f64>, x: &DMatrix<f64>, edges: &[Edge]) -> Result<ScoreTensor> {
    let d = theta_hat.nrows();
    if theta_hat.ncols() != d || x.ncols() != d {
        return Err(Error::Shape(format!(
            "theta is {:?}, data has {} columns",
            theta_hat.shape(),
            x.ncols()
        )));
    }
    let mut seen = std::collections::HashSet::with_capacity(edges.len());
    for &(j, k) in edges {
        if j >= d || k >= d {
            return Err(Error::InvalidInput(format!("edge ({j}, {k}) out of range for d = {d}")));
        }
        if !seen.insert((j, k)) {
            return Err(Error::InvalidInput(format!("duplicate edge ({j}, {k})")));
        }
    }
    for j in 0..d {
        if !(theta_hat[(j, j)] > 0.0) {
            return Err(Error::DegenerateDenominator { index: j });
        }
    }
    // left[(i, j)] = Θ̂ⱼᵀXᵢ, right[(i, k)] = XᵢᵀΘ̂ₖ.
    let left = x * theta_hat.transpose();
    let right = x * theta_hat;
    let n = x.nrows();
    let mut scores = DMatrix::zeros(n, edges.len());
    for (e, &(j, k)) in edges.iter().enumerate() {
        let scale = 1.0 / (theta_hat[(j, j)] * theta_hat[(k, k)]).sqrt();
        let offset = theta_hat[(j, k)];
        let lj = left.column(j);
        let rk = right.column(k);
        let mut col = scores.column_mut(e);
        for i in 0..n {
            col[i] = (lj[i] * rk[i] - offset) * scale;
        }
    }
    Ok(ScoreTensor {
        scores,
        edges: edges.to_vec(),
    })
}

/// `{(j, ℓ) : ℓ ≠ j}` in ascending `ℓ`.
pub fn row_edges(j: usize, d: usize) -> Vec<Edge> {
    (0..d).filter(|&l| l != j).map(|l| (j, l)).collect()
}

/// All `j < k` pairs in row-major order.
pub fn upper_edges(d: usize) -> Vec<Edge> {
    let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for j in 0..d {
        for k in (j + 1)..d {
            out.push((j, k));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverse_pair_is_a_fixed_point() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let theta = s.clone().try_inverse().unwrap();
        let out = onestep_debias(&theta, &CovMatrix::new(s).unwrap(), 10).unwrap();
        assert!((&out.theta_d - &theta).amax() < 1e-12);
        for j in 0..3 {
            assert_eq!(out.theta_std[(j, j)], 1.0);
        }
    }

    #[test]
    fn identity_pair() {
        let i = DMatrix::<f64>::identity(4, 4);
        let out = onestep_debias(&i, &CovMatrix::new(i.clone()).unwrap(), 5).unwrap();
        assert_eq!(out.theta_std, i);
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        let s = CovMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let theta = DMatrix::from_row_slice(2, 2, &[1e-12, 0.0, 0.0, 1.0]);
        assert!(matches!(
            onestep_debias(&theta, &s, 3),
            Err(Error::DegenerateDenominator { index: 0 })
        ));
    }

    #[test]
    fn basis_observation_scores() {
        let theta = DMatrix::<f64>::identity(3, 3);
        let mut x = DMatrix::zeros(1, 3);
        x[(0, 0)] = 1.0;
        let sc = build_scores(&theta, &x, &[(0, 1), (0, 2)]).unwrap();
        assert_eq!(sc.scores, DMatrix::zeros(1, 2));

        let x = DMatrix::from_element(1, 2, 1.0);
        let sc = build_scores(&DMatrix::identity(2, 2), &x, &[(0, 1)]).unwrap();
        assert_eq!(sc.scores[(0, 0)], 1.0);
    }

    #[test]
    fn score_edges_validated() {
        let theta = DMatrix::<f64>::identity(3, 3);
        let x = DMatrix::zeros(2, 3);
        assert!(build_scores(&theta, &x, &[(0, 3)]).is_err());
        assert!(build_scores(&theta, &x, &[(0, 1), (0, 1)]).is_err());
    }
}
