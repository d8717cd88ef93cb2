mod oracles;

use nalgebra::{DMatrix, DVector};
use oracles::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use startrek::data::DataMatrix;
use startrek::solvers::*;

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-10,
        max_iter: 100_000,
        ..Default::default()
    }
}

#[test]
fn lasso_scalar_soft_threshold() {
    let x = DMatrix::from_element(4, 1, 1.0);
    let y = DVector::from_element(4, 1.0);
    let b = lasso(&x, &y, 0.5, &SolverConfig::default()).unwrap();
    assert!((b[0] - 0.5).abs() < 1e-12);
}

#[test]
fn lasso_kkt_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let (n, p) = (20, 10);
        let x = normal_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lambda = if case % 2 == 0 {
            0.1
        } else {
            rng.random_range(0.01..0.5)
        };
        let b = lasso(&x, &y, lambda, &tight()).unwrap();
        let r = kkt_oracle(&x, &y, &b, lambda);
        assert!(r <= 1e-8, "case {case}: KKT residual {r:e}");
        assert!((lasso_kkt_residual(&x, &y, &b, lambda) - r).abs() < 1e-12);
    }
}

#[test]
fn glasso_matches_slow_oracle() {
    let s = ar1(4, 0.5);
    for lambda in [0.01, 0.1] {
        let fit = glasso(&CovMatrix::new(s.clone()).unwrap(), lambda, &tight()).unwrap();
        let oracle = glasso_oracle(&s, lambda);
        let err = (&fit.theta - &oracle).amax();
        assert!(err < 1e-4, "lambda {lambda}: max error {err:e}");
    }
}

#[test]
fn glasso_random_covariance_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = normal_matrix(&mut rng, 30, 4);
    let s = x.tr_mul(&x) / 30.0;
    let s = (&s + s.transpose()) * 0.5;
    let fit = glasso(&CovMatrix::new(s.clone()).unwrap(), 0.05, &tight()).unwrap();
    assert!((&fit.theta - glasso_oracle(&s, 0.05)).amax() < 1e-4);
}

#[test]
fn glasso_identity_and_pd() {
    let s = CovMatrix::new(DMatrix::identity(5, 5)).unwrap();
    for lambda in [0.0, 0.2] {
        let fit = glasso(&s, lambda, &SolverConfig::default()).unwrap();
        assert!((fit.theta - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }
}

#[test]
fn glasso_sparsity_nonincreasing_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = normal_matrix(&mut rng, 60, 8);
    let s = CovMatrix::from_data(&x).unwrap();
    let grid = [0.4, 0.2, 0.1, 0.05, 0.02];
    let mut prev = 0usize;
    for (i, &lambda) in grid.iter().enumerate() {
        let fit = glasso(&s, lambda, &SolverConfig::default()).unwrap();
        assert!(fit.theta.clone().cholesky().is_some());
        assert_eq!(fit.theta, fit.theta.transpose());
        let nnz = (0..8)
            .flat_map(|j| (0..8).map(move |k| (j, k)))
            .filter(|&(j, k)| j != k && fit.theta[(j, k)] != 0.0)
            .count();
        if i > 0 {
            assert!(nnz >= prev, "nonzeros dropped from {prev} to {nnz} as lambda fell");
        }
        prev = nnz;
    }
}

#[test]
fn glasso_cv_picks_better_heldout_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = DMatrix::from_fn(10, 10, |j, k| {
        if j == k {
            1.0
        } else if j.abs_diff(k) == 1 {
            0.4
        } else {
            0.0
        }
    });
    let l = theta.clone().cholesky().unwrap().l();
    let z = normal_matrix(&mut rng, 10, 200);
    let x = l.transpose().solve_upper_triangular(&z).unwrap().transpose();
    let data = DataMatrix::unlabeled(x.clone());
    let cfg = SolverConfig::default();
    let grid = [10.0, 0.0001];
    let cv = glasso_cv(&data, &grid, &cfg, 17).unwrap();

    let folds = fold_assignment(200, cfg.cv_folds, 17);
    let mut means = [0.0; 2];
    for f in 0..cfg.cv_folds {
        let train: Vec<usize> = (0..200).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..200).filter(|&i| folds[i] == f).collect();
        let xt = x.select_rows(train.iter());
        let xs = x.select_rows(test.iter());
        let s_train = CovMatrix::from_data(&xt).unwrap();
        let s_test = xs.tr_mul(&xs) / test.len() as f64;
        for (g, &lambda) in grid.iter().enumerate() {
            let fit = glasso(&s_train, lambda, &cfg).unwrap();
            let ld = 2.0
                * fit
                    .theta
                    .clone()
                    .cholesky()
                    .unwrap()
                    .l()
                    .diagonal()
                    .iter()
                    .map(|v| v.ln())
                    .sum::<f64>();
            means[g] += (ld - (&s_test * &fit.theta).trace()) / cfg.cv_folds as f64;
        }
    }
    let expect = if means[1] > means[0] { 0.0001 } else { 10.0 };
    assert_eq!(cv.lambda_star, expect);
    for (got, want) in cv.mean_scores.iter().zip(&means) {
        assert!((got - want).abs() < 1e-6);
    }
}

#[test]
fn fold_partition_deterministic() {
    assert_eq!(fold_assignment(10, 2, 7), fold_assignment(10, 2, 7));
}

#[test]
fn glasso_cv_rejects_small_n() {
    let data = DataMatrix::unlabeled(DMatrix::from_fn(3, 2, |i, j| (i + j) as f64));
    assert!(glasso_cv(&data, &[0.1], &SolverConfig::default(), 0).is_err());
}

#[test]
fn scaled_lasso_noise_band() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n, p) = (200, 50);
        let x = normal_matrix(&mut rng, n, p);
        let mut beta = DVector::zeros(p);
        beta[0] = 2.0;
        beta[1] = -1.5;
        beta[2] = 1.0;
        let y = &x * &beta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lambda0 = 1.1 * ((p as f64).ln() / n as f64).sqrt();
        let fit = scaled_lasso(&x, &y, lambda0, &SolverConfig::default()).unwrap();
        assert!((0.8..=1.2).contains(&fit.sigma), "seed {seed}: sigma {}", fit.sigma);

        // Fixed point: σ matches the residual and β solves the lasso at σλ₀.
        let r = (&y - &x * &fit.beta).norm() / (n as f64).sqrt();
        assert!((r - fit.sigma).abs() <= 1e-6 * fit.sigma);
        assert!(lasso_kkt_residual(&x, &y, &fit.beta, fit.sigma * lambda0) <= 1e-6);
    }
}

#[test]
fn scaled_lasso_noiseless_flags() {
    let x = DMatrix::from_fn(30, 1, |i, _| 1.0 + (i % 3) as f64);
    let y = &x * DVector::from_element(1, 1.5);
    let fit = scaled_lasso(&x, &y.column(0).into_owned(), 0.01, &SolverConfig::default()).unwrap();
    assert!(fit.sigma <= 1e-6);
    assert!(fit.degenerate_noise);
}

/// Exact 2-d QP oracle: with `r = Σm − e`, the program is
/// `min (e + r)ᵀΣ⁻¹(e + r)` over the box `|r|∞ ≤ μ`. The minimizer is the
/// unconstrained one if inside, else on an edge or a corner.
fn mprogram_oracle(s: &DMatrix<f64>, i: usize, mu: f64) -> f64 {
    let p = s.clone().try_inverse().unwrap();
    let mut e = DVector::zeros(2);
    e[i] = 1.0;
    let f = |r: &DVector<f64>| {
        let v = &e + r;
        (v.transpose() * &p * &v)[0]
    };
    let inside = |r: &DVector<f64>| r.iter().all(|v| v.abs() <= mu + 1e-15);
    let mut best = f64::INFINITY;
    let r0 = -&e;
    if inside(&r0) {
        best = best.min(f(&r0));
    }
    for fixed in 0..2 {
        let free = 1 - fixed;
        for sgn in [-1.0, 1.0] {
            // Minimize over the free coordinate with the other pinned.
            let c = sgn * mu;
            let a = p[(free, free)];
            let b = p[(free, fixed)] * (e[fixed] + c);
            let t = (-b / a - e[free]).clamp(-mu, mu);
            let mut r = DVector::zeros(2);
            r[fixed] = c;
            r[free] = t;
            best = best.min(f(&r));
        }
    }
    best
}

#[test]
fn m_program_matches_qp_oracle() {
    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let cov = CovMatrix::new(s.clone()).unwrap();
    let mp = m_program(&cov, 0.05, &SolverConfig::default()).unwrap();
    for i in 0..2 {
        let m = mp.m.row(i).transpose();
        let mut r = &s * &m;
        r[i] -= 1.0;
        assert!(r.amax() <= 0.05 + 1e-9);
        let objective = (m.transpose() * &s * &m)[0];
        assert!((objective - mprogram_oracle(&s, i, 0.05)).abs() < 1e-6);
        assert!(!mp.fallback[i]);
    }
}

#[test]
fn m_program_slack_constraint_gives_zero() {
    let cov = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
    let mp = m_program(&cov, 1.0, &SolverConfig::default()).unwrap();
    assert!(mp.m.amax() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn m_program_rows_feasible(seed in 0u64..1000, mu in 0.02f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(&mut rng, 40, 6);
        let cov = CovMatrix::from_data(&x).unwrap();
        let mp = m_program(&cov, mu, &SolverConfig::default()).unwrap();
        for i in 0..6 {
            if mp.fallback[i] { continue; }
            let mut r = cov.matrix() * mp.m.row(i).transpose();
            r[i] -= 1.0;
            prop_assert!(r.amax() <= mu + 1e-9);
        }
    }

    #[test]
    fn lasso_kkt_property(seed in 0u64..10_000, lambda in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(&mut rng, 15, 8);
        let y = DVector::from_fn(15, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = lasso(&x, &y, lambda, &tight()).unwrap();
        prop_assert!(kkt_oracle(&x, &y, &b, lambda) <= 1e-8);
    }

    #[test]
    fn solvers_are_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(&mut rng, 50, 6);
        let data = DataMatrix::unlabeled(x);
        let grid = default_lambda_grid(&CovMatrix::from_data(&data.values).unwrap());
        let a = glasso_cv(&data, &grid, &SolverConfig::default(), seed).unwrap();
        let b = glasso_cv(&data, &grid, &SolverConfig::default(), seed).unwrap();
        prop_assert_eq!(a.theta, b.theta);
        prop_assert_eq!(a.lambda_star, b.lambda_star);
    }
}
