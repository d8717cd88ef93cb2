//! Slow reference implementations shared by the test suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use startrek::quantile::BootstrapEnsemble;

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Entrywise subgradient violation of `(1/2n)‖y − Xβ‖² + λ‖β‖₁`.
pub fn kkt_oracle(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let mut worst = 0.0f64;
    for k in 0..x.ncols() {
        let mut g = 0.0;
        for i in 0..x.nrows() {
            let mut fit = 0.0;
            for l in 0..x.ncols() {
                fit += x[(i, l)] * beta[l];
            }
            g += x[(i, k)] * (fit - y[i]);
        }
        g /= n;
        let v = if beta[k] > 0.0 {
            (g + lambda).abs()
        } else if beta[k] < 0.0 {
            (g - lambda).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Proximal gradient on `−log det Θ + tr(SΘ) + λ Σ_{j≠k} |Θ_jk|` with
/// backtracking, run to a fixed point.
pub fn glasso_oracle(s: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = s.nrows();
    let obj = |t: &DMatrix<f64>| -> f64 {
        let ch = t.clone().cholesky().unwrap();
        let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -logdet + (s * t).trace()
    };
    let prox = |m: &DMatrix<f64>, step: f64| {
        DMatrix::from_fn(d, d, |j, k| {
            let v = m[(j, k)];
            if j == k {
                v
            } else {
                v.signum() * (v.abs() - step * lambda).max(0.0)
            }
        })
    };
    let mut theta = DMatrix::from_diagonal(&s.diagonal().map(|v| 1.0 / v));
    let mut step = 1.0;
    for _ in 0..200_000 {
        let inv = theta.clone().try_inverse().unwrap();
        let grad = s - &inv;
        let f0 = obj(&theta);
        let next = loop {
            let cand = prox(&(&theta - &grad * step), step);
            let cand = (&cand + cand.transpose()) * 0.5;
            if cand.clone().cholesky().is_some() {
                let diff = &cand - &theta;
                let quad = f0 + grad.component_mul(&diff).sum() + diff.norm_squared() / (2.0 * step);
                if obj(&cand) <= quad + 1e-15 {
                    break cand;
                }
            }
            step *= 0.5;
        };
        let change = (&next - &theta).amax();
        theta = next;
        step = (step * 2.0).min(1.0);
        if change < 1e-13 {
            break;
        }
    }
    theta
}

pub fn ar1(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |j, k| rho.powi((j as i32 - k as i32).abs()))
}

pub fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, d, d);
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

/// Literal loop evaluation of the one-step formula.
pub fn debias_oracle(theta: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = theta.nrows();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut denom = 0.0;
        for l in 0..d {
            denom += theta[(j, l)] * s[(l, j)];
        }
        for k in 0..d {
            let mut corr = 0.0;
            for l in 0..d {
                let mut sk = 0.0;
                for m in 0..d {
                    sk += s[(l, m)] * theta[(m, k)];
                }
                if l == k {
                    sk -= 1.0;
                }
                corr += theta[(j, l)] * sk;
            }
            out[(j, k)] = theta[(j, k)] - corr / denom;
        }
    }
    out
}

pub fn random_row(rng: &mut ChaCha8Rng, len: usize, b: usize) -> (Vec<f64>, BootstrapEnsemble) {
    let abs: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 3.5).collect();
    let draws: Vec<f64> = (0..len * b)
        .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
        .collect();
    let ens = BootstrapEnsemble::from_draws((0..len).map(|c| (0, c + 1)).collect(), b, draws, None).unwrap();
    (abs, ens)
}

/// Direct enumeration of `(j₁, j₂, k₁, k₂)` with `j₁ < j₂` both null.
pub fn s_brute(adj: &DMatrix<u8>, k_tau: usize) -> u64 {
    let d = adj.nrows();
    let nz = |a: usize, b: usize| a == b || adj[(a, b)] != 0;
    let deg = |j: usize| (0..d).filter(|&l| l != j && adj[(j, l)] != 0).count();
    let mut count = 0;
    for j1 in 0..d {
        for j2 in j1 + 1..d {
            if deg(j1) >= k_tau || deg(j2) >= k_tau {
                continue;
            }
            for k1 in 0..d {
                for k2 in 0..d {
                    if k1 != k2 && !nz(j1, j2) && !nz(j1, k1) && !nz(j2, k2) && nz(j1, k2) && nz(j2, k1) {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

pub fn random_adj(rng: &mut ChaCha8Rng, d: usize, p: f64) -> DMatrix<u8> {
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            if rng.random::<f64>() < p {
                a[(i, j)] = 1;
                a[(j, i)] = 1;
            }
        }
    }
    a
}
