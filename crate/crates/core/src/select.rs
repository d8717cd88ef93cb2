//! The StarTrek filter: per-node combinatorial p-values followed by a
//! Benjamini–Hochberg step, and the skip-down single-node test.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ggm::{build_scores, row_edges};
use crate::quantile::{build_ensemble_with, BootstrapEnsemble, Multipliers};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    /// Degree threshold: node `j` is a hub when its degree is at least `k_tau`.
    pub k_tau: usize,
    /// Nominal FDR level.
    pub q: f64,
}

impl HypothesisConfig {
    pub fn validate(&self, row_len: usize) -> Result<()> {
        if self.k_tau < 1 || self.k_tau > row_len {
            return invalid(format!("k_tau = {} outside [1, {row_len}]", self.k_tau));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return invalid(format!("q = {} outside (0, 1)", self.q));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub alpha: Vec<f64>,
    /// Selected node indices, ascending.
    pub selected: Vec<usize>,
    pub j_max: usize,
    pub bh_threshold: f64,
}

/// Bootstrap draws for one row of the estimate. Column `c` of `ensemble`
/// corresponds to entry `(j, others[c])`.
#[derive(Debug, Clone)]
pub struct RowEnsemble {
    pub others: Vec<usize>,
    pub ensemble: Arc<BootstrapEnsemble>,
}

/// Supplies per-row ensembles to the filter.
pub trait EnsembleProvider: Sync {
    fn row(&self, j: usize) -> Result<RowEnsemble>;
}

/// Multiplier-bootstrap rows for a Gaussian graphical model. Every row uses
/// the same multipliers, so maxima over different rows come from one joint
/// bootstrap.
pub struct GgmBootstrap<'a> {
    theta_hat: &'a DMatrix<f64>,
    x: &'a DMatrix<f64>,
    mult: Multipliers,
}

impl<'a> GgmBootstrap<'a> {
    pub fn new(theta_hat: &'a DMatrix<f64>, x: &'a DMatrix<f64>, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return invalid("B must be at least 1");
        }
        Ok(Self {
            theta_hat,
            x,
            mult: Multipliers::generate(x.nrows(), b, seed),
        })
    }
}

impl EnsembleProvider for GgmBootstrap<'_> {
    fn row(&self, j: usize) -> Result<RowEnsemble> {
        let d = self.theta_hat.nrows();
        if j >= d {
            return invalid(format!("node {j} out of range"));
        }
        let edges = row_edges(j, d);
        let scores = build_scores(self.theta_hat, self.x, &edges)?;
        let ensemble = build_ensemble_with(&scores, &self.mult)?;
        Ok(RowEnsemble {
            others: edges.into_iter().map(|(_, l)| l).collect(),
            ensemble: Arc::new(ensemble),
        })
    }
}

/// Fixed, precomputed rows.
pub struct FixedEnsembles(pub Vec<RowEnsemble>);

impl EnsembleProvider for FixedEnsembles {
    fn row(&self, j: usize) -> Result<RowEnsemble> {
        self.0
            .get(j)
            .cloned()
            .ok_or_else(|| crate::Error::InvalidInput(format!("no ensemble for row {j}")))
    }
}

/// Entries of `row` in descending absolute value; ties by ascending position.
fn descending_order(abs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[b].total_cmp(&abs[a]).then(a.cmp(&b)));
    idx
}

/// `α_j = max_{s ≤ k_τ} ĉ⁻¹(√n |Θ̃_(s)|, E⁽ˢ⁾)` with
/// `E⁽ˢ⁾ = {ℓ : |Θ̃_jℓ| ≤ |Θ̃_(s)|}`, given absolute row values aligned with
/// the ensemble columns.
pub fn row_alpha(abs: &[f64], sqrt_n: f64, ens: &BootstrapEnsemble, k_tau: usize) -> Result<f64> {
    if abs.len() != ens.n_edges() {
        return Err(crate::Error::Shape(format!(
            "row has {} entries, ensemble has {} columns",
            abs.len(),
            ens.n_edges()
        )));
    }
    if k_tau == 0 || k_tau > abs.len() {
        return invalid(format!("k_tau = {k_tau} outside [1, {}]", abs.len()));
    }
    let order = descending_order(abs);
    let mut alpha = 0.0f64;
    let mut cols = Vec::with_capacity(abs.len());
    for &pos in order.iter().take(k_tau) {
        let level = abs[pos];
        cols.clear();
        cols.extend((0..abs.len()).filter(|&c| abs[c] <= level));
        let p = ens.c_hat_inv_cols(sqrt_n * level, &cols)?;
        alpha = alpha.max(p);
    }
    Ok(alpha)
}

/// Skip-down test of `degree(j) ≥ k_τ` at level `alpha` on aligned row data.
pub fn row_skipdown(abs: &[f64], sqrt_n: f64, ens: &BootstrapEnsemble, k_tau: usize, alpha: f64) -> Result<bool> {
    if abs.len() != ens.n_edges() {
        return Err(crate::Error::Shape("row and ensemble disagree".into()));
    }
    if k_tau == 0 || k_tau > abs.len() {
        return invalid(format!("k_tau = {k_tau} outside [1, {}]", abs.len()));
    }
    let mut remaining: Vec<usize> = (0..abs.len()).collect();
    let mut rejected = 0usize;
    loop {
        let c = ens.c_hat_cols(alpha, &remaining)?;
        let before = remaining.len();
        remaining.retain(|&col| sqrt_n * abs[col] <= c);
        let newly = before - remaining.len();
        rejected += newly;
        if rejected >= k_tau {
            return Ok(true);
        }
        if newly == 0 || remaining.is_empty() {
            return Ok(false);
        }
    }
}

fn row_abs(theta: &DMatrix<f64>, j: usize, others: &[usize]) -> Result<Vec<f64>> {
    if j >= theta.nrows() {
        return invalid(format!("row {j} out of range"));
    }
    others
        .iter()
        .map(|&l| {
            if l >= theta.ncols() {
                invalid(format!("column {l} out of range"))
            } else {
                Ok(theta[(j, l)].abs())
            }
        })
        .collect()
}

pub fn node_alpha(
    theta_std: &DMatrix<f64>,
    provider: &dyn EnsembleProvider,
    j: usize,
    k_tau: usize,
    n: usize,
) -> Result<f64> {
    let row = provider.row(j)?;
    let abs = row_abs(theta_std, j, &row.others)?;
    row_alpha(&abs, (n as f64).sqrt(), &row.ensemble, k_tau)
}

pub fn skipdown_test(
    theta_std: &DMatrix<f64>,
    provider: &dyn EnsembleProvider,
    j: usize,
    k_tau: usize,
    alpha: f64,
    n: usize,
) -> Result<bool> {
    let row = provider.row(j)?;
    let abs = row_abs(theta_std, j, &row.others)?;
    row_skipdown(&abs, (n as f64).sqrt(), &row.ensemble, k_tau, alpha)
}

/// Benjamini–Hochberg step on per-node p-values.
pub fn bh_select(alpha: &[f64], q: f64) -> SelectionResult {
    let d = alpha.len();
    let mut sorted = alpha.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut j_max = 0;
    for j in 1..=d {
        if sorted[j - 1] <= q * j as f64 / d as f64 {
            j_max = j;
        }
    }
    let (bh_threshold, selected) = if j_max > 0 {
        let t = sorted[j_max - 1];
        (t, (0..d).filter(|&j| alpha[j] <= t).collect())
    } else {
        (0.0, Vec::new())
    };
    SelectionResult {
        alpha: alpha.to_vec(),
        selected,
        j_max,
        bh_threshold,
    }
}

/// Runs `node_alpha` on every row, then `bh_select`.
pub fn startrek(
    theta: &DMatrix<f64>,
    provider: &dyn EnsembleProvider,
    cfg: &HypothesisConfig,
    n: usize,
) -> Result<SelectionResult> {
    if !(cfg.q > 0.0 && cfg.q < 1.0) {
        return invalid(format!("q = {} outside (0, 1)", cfg.q));
    }
    let alpha: Vec<f64> = (0..theta.nrows())
        .into_par_iter()
        .map(|j| node_alpha(theta, provider, j, cfg.k_tau, n))
        .collect::<Result<_>>()?;
    Ok(bh_select(&alpha, cfg.q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_ens(b_rows: &[Vec<f64>]) -> BootstrapEnsemble {
        let e = b_rows[0].len();
        let draws = b_rows.iter().flatten().cloned().collect();
        BootstrapEnsemble::from_draws((0..e).map(|c| (0, c)).collect(), b_rows.len(), draws, None).unwrap()
    }

    #[test]
    fn bh_worked_example() {
        let r = bh_select(&[0.01, 0.04, 0.5], 0.2);
        assert_eq!(r.j_max, 2);
        assert_eq!(r.bh_threshold, 0.04);
        assert_eq!(r.selected, vec![0, 1]);
    }

    #[test]
    fn bh_no_signal() {
        let r = bh_select(&[1.0; 6], 0.1);
        assert_eq!(r.j_max, 0);
        assert!(r.selected.is_empty());
        assert_eq!(r.bh_threshold, 0.0);
    }

    #[test]
    fn null_row_has_unit_alpha() {
        let ens = row_ens(&[vec![0.3, 0.2], vec![0.5, 0.1], vec![0.4, 0.9]]);
        assert_eq!(row_alpha(&[0.0, 0.0], 2.0, &ens, 1).unwrap(), 1.0);
        assert_eq!(row_alpha(&[0.0, 0.0], 2.0, &ens, 2).unwrap(), 1.0);
    }

    #[test]
    fn hand_evaluated_pipeline() {
        // d = 3, k_τ = 1, n = 4: t = 2 · 0.5 = 1.0; maxima over the row are
        // {0.4, 0.9, 1.1, 1.3}.
        let ens = row_ens(&[vec![0.4, 0.1], vec![0.2, 0.9], vec![1.1, 0.3], vec![0.7, 1.3]]);
        let a = row_alpha(&[0.5, 0.2], 2.0, &ens, 1).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn alpha_is_max_over_order_statistics() {
        // s = 1 uses both columns, s = 2 only the second.
        let ens = row_ens(&[vec![5.0, 0.1], vec![5.0, 0.2], vec![5.0, 0.3], vec![5.0, 0.4]]);
        let abs = [3.0, 0.25];
        let p1 = ens.c_hat_inv_cols(3.0, &[0, 1]).unwrap();
        let p2 = ens.c_hat_inv_cols(0.25, &[1]).unwrap();
        assert_eq!(p1, 1.0);
        assert_eq!(p2, 0.5);
        assert_eq!(row_alpha(&abs, 1.0, &ens, 1).unwrap(), p1);
        let ens2 = row_ens(&[vec![0.1, 0.1], vec![0.2, 0.2], vec![0.3, 0.3], vec![0.4, 0.9]]);
        let a1 = row_alpha(&abs, 1.0, &ens2, 1).unwrap();
        let a2 = row_alpha(&abs, 1.0, &ens2, 2).unwrap();
        assert_eq!(a1, 0.0);
        assert_eq!(a2, 0.5);
    }

    #[test]
    fn skipdown_edge_cases() {
        let ens = row_ens(&[vec![0.5, 0.5], vec![1.0, 1.0]]);
        assert!(!row_skipdown(&[0.0, 0.0], 1.0, &ens, 1, 0.05).unwrap());
        assert!(row_skipdown(&[100.0, 0.0], 1.0, &ens, 1, 0.05).unwrap());
    }

    #[test]
    fn k_tau_bounds() {
        let ens = row_ens(&[vec![0.5, 0.5]]);
        assert!(row_alpha(&[0.1, 0.2], 1.0, &ens, 3).is_err());
        assert!(row_alpha(&[0.1, 0.2], 1.0, &ens, 0).is_err());
    }

    #[test]
    fn identity_estimate_selects_nothing() {
        let d = 5;
        let theta = DMatrix::<f64>::identity(d, d);
        let x = DMatrix::from_fn(20, d, |i, j| (((i * 13 + j * 7) % 17) as f64 - 8.0) / 4.0);
        let prov = GgmBootstrap::new(&theta, &x, 200, 1).unwrap();
        let cfg = HypothesisConfig { k_tau: 2, q: 0.1 };
        let r = startrek(&theta, &prov, &cfg, 20).unwrap();
        assert!(r.alpha.iter().all(|&a| a == 1.0));
        assert!(r.selected.is_empty());
    }
}
