use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{glasso, glasso_path, CovMatrix, SolverConfig};
use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct CvResult {
    pub theta: DMatrix<f64>,
    pub lambda_star: f64,
    pub grid: Vec<f64>,
    /// Mean held-out log-likelihood per grid point (`-inf` where a fold failed).
    pub mean_scores: Vec<f64>,
}

/// Fold label (0..folds) for each of `n` rows; a pure function of
/// `(n, folds, seed)`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut crate::rng::seeded_rng(seed));
    let mut labels = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        labels[row] = pos % folds.max(1);
    }
    labels
}

/// 20 log-spaced values from the largest off-diagonal `|S_jk|` down to 1% of it.
pub fn default_lambda_grid(s: &CovMatrix) -> Vec<f64> {
    let m = s.matrix();
    let d = m.nrows();
    let mut lmax = 0.0f64;
    for j in 0..d {
        for k in (j + 1)..d {
            lmax = lmax.max(m[(j, k)].abs());
        }
    }
    if lmax == 0.0 {
        lmax = 1e-3;
    }
    let points = 20;
    (0..points)
        .map(|i| lmax * 0.01f64.powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Gaussian log-likelihood of `theta` on a held-out second-moment matrix,
/// up to constants: `log det Θ − tr(S Θ)`.
pub fn heldout_loglik(theta: &DMatrix<f64>, s_test: &DMatrix<f64>) -> f64 {
    match crate::linalg::log_det_pd(theta) {
        Some(ld) => ld - s_test.component_mul(theta).sum(),
        None => f64::NEG_INFINITY,
    }
}

fn rows_gram(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let sub = x.select_rows(rows.iter());
    crate::linalg::gram(&sub)
}

/// Cross-validated graphical lasso over a descending grid; refits at the
/// chosen penalty on all rows.
pub fn glasso_cv(x: &DataMatrix, lambda_grid: &[f64], cfg: &SolverConfig, seed: u64) -> Result<CvResult> {
    cfg.validate()?;
    if lambda_grid.is_empty() {
        return invalid("lambda grid is empty");
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return invalid("lambda grid must be strictly positive");
    }
    if lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("lambda grid must be sorted strictly descending");
    }
    let folds = cfg.cv_folds;
    if folds < 2 {
        return invalid("cross-validation needs at least 2 folds");
    }
    let n = x.n();
    if n < folds {
        return invalid(format!("n = {n} is smaller than the fold count {folds}"));
    }
    let full = CovMatrix::from_data(&x.values)?;
    if lambda_grid.len() == 1 {
        let fit = glasso(&full, lambda_grid[0], cfg)?;
        return Ok(CvResult {
            theta: fit.theta,
            lambda_star: lambda_grid[0],
            grid: lambda_grid.to_vec(),
            mean_scores: vec![f64::NAN],
        });
    }

    let labels = fold_assignment(n, folds, seed);
    let fold_scores: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            let s_train = rows_gram(&x.values, &train);
            let s_test = rows_gram(&x.values, &test);
            let Ok(s_train) = CovMatrix::new(s_train) else {
                return vec![f64::NEG_INFINITY; lambda_grid.len()];
            };
            glasso_path(&s_train, lambda_grid, cfg)
                .into_iter()
                .map(|fit| match fit {
                    Ok(fit) => heldout_loglik(&fit.theta, &s_test),
                    Err(_) => f64::NEG_INFINITY,
                })
                .collect()
        })
        .collect();

    let mean_scores: Vec<f64> = (0..lambda_grid.len())
        .map(|l| fold_scores.iter().map(|fs| fs[l]).sum::<f64>() / folds as f64)
        .collect();
    let mut best = 0usize;
    for l in 1..mean_scores.len() {
        if mean_scores[l] > mean_scores[best] {
            best = l;
        }
    }
    if !mean_scores[best].is_finite() {
        return Err(Error::Converge {
            solver: "glasso_cv",
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let lambda_star = lambda_grid[best];
    let fit = glasso(&full, lambda_star, cfg)?;
    Ok(CvResult {
        theta: fit.theta,
        lambda_star,
        grid: lambda_grid.to_vec(),
        mean_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_deterministic_and_balanced() {
        let a = fold_assignment(10, 2, 7);
        let b = fold_assignment(10, 2, 7);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|&&f| f == 0).count(), 5);
        assert_ne!(fold_assignment(10, 2, 8), a);
    }

    #[test]
    fn grid_rules() {
        let x = DataMatrix::unlabeled(DMatrix::from_fn(12, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0));
        let cfg = SolverConfig::default();
        assert!(glasso_cv(&x, &[], &cfg, 0).is_err());
        assert!(glasso_cv(&x, &[0.1, 0.2], &cfg, 0).is_err());
        assert!(glasso_cv(&x, &[0.1, 0.0], &cfg, 0).is_err());
        let small = DataMatrix::unlabeled(DMatrix::from_element(3, 2, 1.0));
        assert!(matches!(
            glasso_cv(&small, &[0.1], &cfg, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn single_point_grid_is_returned() {
        let x = DataMatrix::unlabeled(DMatrix::from_fn(12, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0));
        let r = glasso_cv(&x, &[0.3], &SolverConfig::default(), 1).unwrap();
        assert_eq!(r.lambda_star, 0.3);
    }

    #[test]
    fn default_grid_shape() {
        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0])).unwrap();
        let g = default_lambda_grid(&s);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.4).abs() < 1e-15);
        assert!((g[19] - 0.004).abs() < 1e-12);
    }
}
