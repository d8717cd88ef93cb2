//! Monte-Carlo estimates of `|P(‖U‖∞ > t) / P(‖V‖∞ > t) − 1|` for pairs of
//! centred Gaussian vectors.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::fmt_f64;
use crate::rng::{derive_seed, stream_rng};

const BATCH: usize = 8192;

/// How the two vectors share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Independent draws for `U` and `V`.
    Independent,
    /// `U = L_U z`, `V = L_V z` from the same `z`.
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcbRow {
    pub t: f64,
    pub p_u: f64,
    pub p_v: f64,
    pub ratio_dev: f64,
    pub se: f64,
    /// False when `P(‖V‖∞ > t)` is estimated from fewer than 10 exceedances.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcbTable {
    pub rows: Vec<CcbRow>,
    /// Largest `ratio_dev` over stable rows.
    pub sup_dev: f64,
    pub mc_samples: usize,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStudyRow {
    pub delta: f64,
    pub sup_dev: f64,
    pub table: CcbTable,
}

/// 40 equally spaced points on `[0, 1.5·sqrt(log d)]`.
pub fn default_t_grid(d: usize) -> Vec<f64> {
    let hi = 1.5 * (d.max(2) as f64).ln().sqrt();
    (0..40).map(|i| hi * i as f64 / 39.0).collect()
}

/// `Σ_jk = ρ^|j−k|`.
pub fn ar1_cov(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |j, k| rho.powi((j as i32 - k as i32).abs()))
}

/// `max |L z|` over coordinates for `mc` draws, one output vector per factor.
/// All factors see the same `z`; batch `k` uses the stream `(seed, k)`.
fn sample_maxima(factors: &[DMatrix<f64>], mc: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = factors[0].nrows();
    let batches: Vec<Vec<Vec<f64>>> = (0..mc.div_ceil(BATCH))
        .into_par_iter()
        .map(|k| {
            let width = BATCH.min(mc - k * BATCH);
            let mut rng = stream_rng(seed, k as u64);
            let z = DMatrix::from_fn(d, width, |_, _| rng.sample::<f64, _>(StandardNormal));
            factors.iter().map(|l| max_abs_columns(&(l * &z))).collect()
        })
        .collect();
    let mut out = vec![Vec::with_capacity(mc); factors.len()];
    for batch in batches {
        for (dst, src) in out.iter_mut().zip(batch) {
            dst.extend(src);
        }
    }
    out
}

fn max_abs_columns(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.amax()).collect()
}

fn check_grid(t_grid: &[f64], mc: usize) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return invalid("t grid must be nonempty, finite and nonnegative");
    }
    if mc == 0 {
        return invalid("mc_samples must be at least 1");
    }
    Ok(())
}

fn tail_table(mu: &[f64], mv: &[f64], t_grid: &[f64], coupling: Coupling) -> CcbTable {
    let n = mu.len() as f64;
    let mut su = mu.to_vec();
    let mut sv = mv.to_vec();
    su.sort_by(f64::total_cmp);
    sv.sort_by(f64::total_cmp);
    let above = |s: &[f64], t: f64| (s.len() - s.partition_point(|&x| x <= t)) as f64;
    let rows: Vec<CcbRow> = t_grid
        .iter()
        .map(|&t| {
            let (cu, cv) = (above(&su, t), above(&sv, t));
            let (pu, pv) = (cu / n, cv / n);
            let puv = match coupling {
                Coupling::Common => mu.iter().zip(mv).filter(|(a, b)| **a > t && **b > t).count() as f64 / n,
                Coupling::Independent => pu * pv,
            };
            let stable = cv >= 10.0;
            let (ratio_dev, se) = if pv > 0.0 {
                let r = pu / pv;
                let var = (pu * (1.0 - pu) + r * r * pv * (1.0 - pv) - 2.0 * r * (puv - pu * pv)) / (n * pv * pv);
                ((r - 1.0).abs(), var.max(0.0).sqrt())
            } else {
                (f64::INFINITY, f64::INFINITY)
            };
            CcbRow {
                t,
                p_u: pu,
                p_v: pv,
                ratio_dev,
                se,
                stable,
            }
        })
        .collect();
    let sup_dev = rows
        .iter()
        .filter(|r| r.stable)
        .map(|r| r.ratio_dev)
        .fold(0.0, f64::max);
    CcbTable {
        rows,
        sup_dev,
        mc_samples: mu.len(),
        coupling,
    }
}

fn factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidCovariance {
            min_eigenvalue: crate::linalg::min_eigenvalue(cov),
        })
}

/// Tail-ratio deviations for `U ~ N(0, cov_u)` against `V ~ N(0, cov_v)`.
pub fn verify_ccb(
    cov_u: &DMatrix<f64>,
    cov_v: &DMatrix<f64>,
    t_grid: &[f64],
    mc_samples: usize,
    seed: u64,
    coupling: Coupling,
) -> Result<CcbTable> {
    check_grid(t_grid, mc_samples)?;
    if cov_u.shape() != cov_v.shape() || !cov_u.is_square() || cov_u.nrows() == 0 {
        return Err(Error::Shape("covariances must be square and the same size".into()));
    }
    let (lu, lv) = (factor(cov_u)?, factor(cov_v)?);
    let (mu, mv) = match coupling {
        Coupling::Common => {
            let mut m = sample_maxima(&[lu, lv], mc_samples, seed);
            let mv = m.pop().unwrap();
            (m.pop().unwrap(), mv)
        }
        Coupling::Independent => {
            let mu = sample_maxima(&[lu], mc_samples, derive_seed(seed, 0, 0)).pop().unwrap();
            let mv = sample_maxima(&[lv], mc_samples, derive_seed(seed, 0, 1)).pop().unwrap();
            (mu, mv)
        }
    };
    Ok(tail_table(&mu, &mv, t_grid, coupling))
}

/// `U = (X₁, X₂, Z, …, Z)` with `corr(X₁, X₂) = rho`, against
/// `V = (Y₁, Y₂, Z, …, Z)` with independent `Y`s. Repeated copies of `Z` do
/// not change the maximum, so each draw needs only three normals; `d`
/// enters through `t_grid`.
pub fn ccb_counterexample(rho: f64, t_grid: &[f64], mc_samples: usize, seed: u64) -> Result<CcbTable> {
    check_grid(t_grid, mc_samples)?;
    if !(rho.abs() < 1.0) {
        return invalid("rho must lie in (-1, 1)");
    }
    let c = (1.0 - rho * rho).sqrt();
    let l_u = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, rho, c, 0.0, 0.0, 0.0, 1.0]);
    let l_v = DMatrix::identity(3, 3);
    let mut m = sample_maxima(&[l_u, l_v], mc_samples, seed);
    let mv = m.pop().unwrap();
    let mu = m.pop().unwrap();
    Ok(tail_table(&mu, &mv, t_grid, Coupling::Common))
}

/// `V` is AR(1) with parameter `rho`; `U` adds `δ` to entry `(0, 1)` and
/// `(1, 0)`. Every `δ` reuses the same normals.
pub fn delta_inf_study(
    d: usize,
    rho: f64,
    deltas: &[f64],
    t_grid: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<DeltaStudyRow>> {
    check_grid(t_grid, mc_samples)?;
    if d < 2 || deltas.is_empty() {
        return invalid("delta study needs d >= 2 and at least one delta");
    }
    let v = ar1_cov(d, rho);
    let mut factors = vec![factor(&v)?];
    for &delta in deltas {
        let mut u = v.clone();
        u[(0, 1)] += delta;
        u[(1, 0)] += delta;
        factors.push(factor(&u)?);
    }
    let mut maxima = sample_maxima(&factors, mc_samples, seed);
    let mv = maxima.remove(0);
    Ok(deltas
        .iter()
        .zip(maxima)
        .map(|(&delta, mu)| {
            let table = tail_table(&mu, &mv, t_grid, Coupling::Common);
            DeltaStudyRow {
                delta,
                sup_dev: table.sup_dev,
                table,
            }
        })
        .collect())
}

/// CSV columns `t,ratio_dev,se,stable,p_u,p_v`.
pub fn write_ccb_csv(path: &Path, table: &CcbTable) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t", "ratio_dev", "se", "stable", "p_u", "p_v"])
        .map_err(io)?;
    for r in &table.rows {
        w.write_record([
            fmt_f64(r.t),
            fmt_f64(r.ratio_dev),
            fmt_f64(r.se),
            r.stable.to_string(),
            fmt_f64(r.p_u),
            fmt_f64(r.p_v),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
