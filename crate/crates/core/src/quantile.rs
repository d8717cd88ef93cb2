//! Bootstrap ensembles of per-edge absolute statistics and the quantile /
//! p-value queries on maxima over edge subsets.
//!
//! An ensemble stores, for each draw `b` and each edge `e` of a frozen edge
//! universe, the absolute value of a centered Gaussian statistic. The maximum
//! over any subset `E` is then a row-wise max over the columns of `E`.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::ggm::{Edge, ScoreTensor};
use crate::solvers::CovMatrix;

/// Draws are produced in fixed-size blocks so the floating-point work per
/// block never depends on the number of worker threads.
const DRAW_BLOCK: usize = 64;

pub const STKB_MAGIC: &[u8; 4] = b"STKB";
pub const STKB_VERSION: u32 = 1;

/// Gaussian multipliers `ξ`, one length-`n` column per draw, column `b`
/// drawn from the stream `(seed, b)`.
#[derive(Debug, Clone)]
pub struct Multipliers {
    pub xi: DMatrix<f64>,
    pub seed: u64,
}

impl Multipliers {
    pub fn generate(n: usize, draws: usize, seed: u64) -> Self {
        let cols: Vec<Vec<f64>> = (0..draws)
            .into_par_iter()
            .map(|b| standard_normals(seed, b as u64, n))
            .collect();
        let mut xi = DMatrix::zeros(n, draws);
        for (b, col) in cols.into_iter().enumerate() {
            xi.column_mut(b).copy_from_slice(&col);
        }
        Self { xi, seed }
    }

    pub fn n(&self) -> usize {
        self.xi.nrows()
    }

    pub fn draws(&self) -> usize {
        self.xi.ncols()
    }
}

fn standard_normals(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = crate::rng::stream_rng(seed, stream);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    /// Row-major `B × |E|`.
    draws: Vec<f64>,
    edges: Vec<Edge>,
    b: usize,
    pub seed: Option<u64>,
    index: HashMap<Edge, usize>,
}

impl PartialEq for BootstrapEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.b == other.b && self.edges == other.edges && self.draws == other.draws
    }
}

/// `ĉ(α, E)` request.
#[derive(Debug, Clone)]
pub struct QuantileQuery {
    pub alpha: f64,
    pub edge_set: Vec<Edge>,
}

impl BootstrapEnsemble {
    /// Builds an ensemble from a row-major `B × |E|` table.
    pub fn from_draws(edges: Vec<Edge>, b: usize, draws: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if b == 0 {
            return invalid("ensemble needs at least one draw");
        }
        if draws.len() != b * edges.len() {
            return Err(Error::Shape(format!(
                "{} draws for B = {b} and {} edges",
                draws.len(),
                edges.len()
            )));
        }
        if draws.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("ensemble draws must be finite and nonnegative");
        }
        let mut index = HashMap::with_capacity(edges.len());
        for (c, &e) in edges.iter().enumerate() {
            if index.insert(e, c).is_some() {
                return invalid(format!("duplicate edge {e:?} in ensemble"));
            }
        }
        Ok(Self {
            draws,
            edges,
            b,
            seed,
            index,
        })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn draw_row(&self, b: usize) -> &[f64] {
        let e = self.edges.len();
        &self.draws[b * e..(b + 1) * e]
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn column_of(&self, e: Edge) -> Option<usize> {
        self.index.get(&e).copied()
    }

    /// Column indices for an edge subset; fails on empty sets or edges
    /// outside the universe.
    pub fn resolve(&self, edge_set: &[Edge]) -> Result<Vec<usize>> {
        if edge_set.is_empty() {
            return invalid("edge set is empty");
        }
        edge_set
            .iter()
            .map(|&e| {
                self.column_of(e)
                    .ok_or_else(|| Error::InvalidInput(format!("edge {e:?} not in ensemble universe")))
            })
            .collect()
    }

    /// `T_b = max_{e ∈ cols} draws[b][e]` for every draw.
    pub fn max_over(&self, cols: &[usize]) -> Vec<f64> {
        (0..self.b)
            .map(|b| {
                let row = self.draw_row(b);
                cols.iter().fold(0.0f64, |m, &c| m.max(row[c]))
            })
            .collect()
    }

    /// Upper-α bootstrap quantile of the maximum over `cols`.
    pub fn c_hat_cols(&self, alpha: f64, cols: &[usize]) -> Result<f64> {
        check_alpha(alpha)?;
        if cols.is_empty() {
            return invalid("edge set is empty");
        }
        let k = allowed_exceedances(alpha, self.b);
        if k >= self.b {
            return Ok(0.0);
        }
        let mut t = self.max_over(cols);
        let rank = self.b - k - 1; // zero-based index of T_(B−k)
        let (_, v, _) = t.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
        Ok(*v)
    }

    /// Exceedance fraction `#{b : T_b ≥ t} / B` of the maximum over `cols`.
    pub fn c_hat_inv_cols(&self, t: f64, cols: &[usize]) -> Result<f64> {
        if cols.is_empty() {
            return invalid("edge set is empty");
        }
        let count = self.max_over(cols).into_iter().filter(|&v| v >= t).count();
        Ok(count as f64 / self.b as f64)
    }

    /// Multiplies every draw by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.draws {
            *v *= factor;
        }
        out
    }

    /// Sub-ensemble restricted to `cols`, relabelled with `edges`.
    pub fn select_columns(&self, cols: &[usize], edges: Vec<Edge>) -> Result<Self> {
        let e = self.edges.len();
        let mut draws = Vec::with_capacity(self.b * cols.len());
        for b in 0..self.b {
            let row = &self.draws[b * e..(b + 1) * e];
            draws.extend(cols.iter().map(|&c| row[c]));
        }
        Self::from_draws(edges, self.b, draws, self.seed)
    }

    pub fn write_stkb<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(STKB_MAGIC)?;
        w.write_all(&STKB_VERSION.to_le_bytes())?;
        w.write_all(&(self.b as u64).to_le_bytes())?;
        w.write_all(&(self.edges.len() as u64).to_le_bytes())?;
        for &(j, k) in &self.edges {
            w.write_all(&(j as u64).to_le_bytes())?;
            w.write_all(&(k as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.draws.len() * 8);
        for v in &self.draws {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_stkb<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != STKB_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != STKB_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let b = read_u64(&mut r)? as usize;
        let ne = read_u64(&mut r)? as usize;
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let j = read_u64(&mut r)? as usize;
            let k = read_u64(&mut r)? as usize;
            edges.push((j, k));
        }
        let total = b
            .checked_mul(ne)
            .ok_or_else(|| Error::Format("draw table size overflows".into()))?;
        let mut raw = vec![0u8; total * 8];
        r.read_exact(&mut raw)?;
        let draws = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_draws(edges, b, draws, None)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("alpha = {alpha} outside (0, 1]"));
    }
    Ok(())
}

/// Largest integer `k` with `k / B ≤ α` (evaluated in floating point exactly as
/// `c_hat_inv` evaluates its ratio). The quantile `ĉ(α)` is the order
/// statistic `T_(B−k)`, i.e. the `⌈(1−α)B⌉`-th smallest.
fn allowed_exceedances(alpha: f64, b: usize) -> usize {
    let bf = b as f64;
    let mut k = ((alpha * bf).floor() as usize).min(b);
    while k < b && ((k + 1) as f64 / bf) <= alpha {
        k += 1;
    }
    while k > 0 && (k as f64 / bf) > alpha {
        k -= 1;
    }
    k
}

/// `ĉ(α, E)`; `ĉ(1, E) = 0`.
pub fn c_hat(ens: &BootstrapEnsemble, q: &QuantileQuery) -> Result<f64> {
    let cols = ens.resolve(&q.edge_set)?;
    ens.c_hat_cols(q.alpha, &cols)
}

/// `ĉ⁻¹(t, E) = #{b : T_b ≥ t} / B`.
pub fn c_hat_inv(ens: &BootstrapEnsemble, t: f64, edge_set: &[Edge]) -> Result<f64> {
    let cols = ens.resolve(edge_set)?;
    ens.c_hat_inv_cols(t, &cols)
}

/// Multiplier bootstrap: `draws[b][e] = |Σᵢ ξ_{b,i} scores[(i, e)]| / √n`.
pub fn build_ensemble(scores: &ScoreTensor, b: usize, seed: u64) -> Result<BootstrapEnsemble> {
    if b == 0 {
        return invalid("B must be at least 1");
    }
    let mult = Multipliers::generate(scores.n(), b, seed);
    build_ensemble_with(scores, &mult)
}

/// Same as [`build_ensemble`] with precomputed multipliers.
pub fn build_ensemble_with(scores: &ScoreTensor, mult: &Multipliers) -> Result<BootstrapEnsemble> {
    let n = scores.n();
    if mult.n() != n {
        return Err(Error::Shape(format!(
            "multipliers have length {}, scores have {n} rows",
            mult.n()
        )));
    }
    let b = mult.draws();
    if b == 0 {
        return invalid("B must be at least 1");
    }
    let ne = scores.edges.len();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let blocks: Vec<Vec<f64>> = (0..b)
        .step_by(DRAW_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let width = DRAW_BLOCK.min(b - start);
            let xi = mult.xi.columns(start, width);
            // (|E| × width), column-major == row-major (width × |E|).
            let prod = scores.scores.tr_mul(&xi);
            prod.as_slice().iter().map(|v| v.abs() * inv_sqrt_n).collect()
        })
        .collect();
    let mut draws = Vec::with_capacity(b * ne);
    for block in blocks {
        draws.extend(block);
    }
    BootstrapEnsemble::from_draws(scores.edges.clone(), b, draws, Some(mult.seed))
}

/// Ensemble of `|Z|` for `Z ~ N(0, cov)`; coordinate `k` is labelled `(0, k)`.
/// Draw `b` uses the normal stream `(seed, b)`.
pub fn gaussian_ensemble_from_cov(cov: &DMatrix<f64>, b: usize, seed: u64) -> Result<BootstrapEnsemble> {
    if b == 0 {
        return invalid("B must be at least 1");
    }
    if !cov.is_square() || !crate::linalg::all_finite(cov) {
        return invalid("covariance must be square and finite");
    }
    let d = cov.nrows();
    let l = crate::linalg::psd_factor(cov, 1e-12, 1e-6)?;
    let blocks: Vec<Vec<f64>> = (0..b)
        .step_by(DRAW_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let width = DRAW_BLOCK.min(b - start);
            let mut zeta = DMatrix::zeros(d, width);
            for w in 0..width {
                let col = standard_normals(seed, (start + w) as u64, d);
                zeta.column_mut(w).copy_from_slice(&col);
            }
            // Column w of z is draw start + w.
            let z = &l * zeta;
            let mut out = Vec::with_capacity(width * d);
            for w in 0..width {
                out.extend(z.column(w).iter().map(|v| v.abs()));
            }
            out
        })
        .collect();
    let mut draws = Vec::with_capacity(b * d);
    for block in blocks {
        draws.extend(block);
    }
    let edges = (0..d).map(|k| (0, k)).collect();
    BootstrapEnsemble::from_draws(edges, b, draws, Some(seed))
}

/// Gaussian approximation ensemble for a debiased-lasso row:
/// `Z ~ N(0, σ̂² M Σ̂ Mᵀ)`.
pub fn gaussian_quantile_ensemble(
    m: &DMatrix<f64>,
    sigma_hat: &CovMatrix,
    noise_sd: f64,
    b: usize,
    seed: u64,
) -> Result<BootstrapEnsemble> {
    if !(noise_sd > 0.0) || !noise_sd.is_finite() {
        return invalid("noise standard deviation must be positive");
    }
    let cov = decorrelated_cov(m, sigma_hat)? * (noise_sd * noise_sd);
    gaussian_ensemble_from_cov(&cov, b, seed)
}

/// `M Σ̂ Mᵀ`, symmetrized.
pub fn decorrelated_cov(m: &DMatrix<f64>, sigma_hat: &CovMatrix) -> Result<DMatrix<f64>> {
    let s = sigma_hat.matrix();
    if m.ncols() != s.nrows() {
        return Err(Error::Shape(format!(
            "M has {} columns, covariance is {}x{}",
            m.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(crate::linalg::symmetrize(&(m * s * m.transpose())))
}

/// Mean of squared scores per edge, `(1/n) Σᵢ scoresᵢ(e)²`.
pub fn score_second_moments(scores: &ScoreTensor) -> DVector<f64> {
    let n = scores.n() as f64;
    DVector::from_iterator(
        scores.edges.len(),
        scores.scores.column_iter().map(|c| c.norm_squared() / n),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(ts: &[f64]) -> BootstrapEnsemble {
        BootstrapEnsemble::from_draws(vec![(0, 1)], ts.len(), ts.to_vec(), None).unwrap()
    }

    #[test]
    fn order_statistic_quantile() {
        let e = toy(&[3.0, 1.0, 4.0, 2.0]);
        let q = QuantileQuery {
            alpha: 0.5,
            edge_set: vec![(0, 1)],
        };
        assert_eq!(c_hat(&e, &q).unwrap(), 2.0);
        let q1 = QuantileQuery {
            alpha: 1.0,
            edge_set: vec![(0, 1)],
        };
        assert_eq!(c_hat(&e, &q1).unwrap(), 0.0);
    }

    #[test]
    fn exceedance_pvalues() {
        let e = toy(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c_hat_inv(&e, 2.5, &[(0, 1)]).unwrap(), 0.5);
        assert_eq!(c_hat_inv(&e, 0.0, &[(0, 1)]).unwrap(), 1.0);
        assert_eq!(c_hat_inv(&e, 4.5, &[(0, 1)]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_distribution() {
        let e = toy(&[1.5; 10]);
        for a in [0.01, 0.2, 0.5, 0.99] {
            let q = QuantileQuery {
                alpha: a,
                edge_set: vec![(0, 1)],
            };
            assert_eq!(c_hat(&e, &q).unwrap(), 1.5);
        }
    }

    #[test]
    fn empty_or_foreign_edge_sets_fail() {
        let e = toy(&[1.0, 2.0]);
        let q = QuantileQuery {
            alpha: 0.1,
            edge_set: vec![],
        };
        assert!(matches!(c_hat(&e, &q), Err(Error::InvalidInput(_))));
        assert!(c_hat_inv(&e, 1.0, &[(2, 3)]).is_err());
    }

    #[test]
    fn single_term_draw() {
        // n = 1 so the draw is |ξ · s|.
        let scores = ScoreTensor {
            scores: DMatrix::from_element(1, 1, 2.0),
            edges: vec![(0, 1)],
        };
        let mult = Multipliers {
            xi: DMatrix::from_element(1, 1, -1.3),
            seed: 0,
        };
        let ens = build_ensemble_with(&scores, &mult).unwrap();
        assert!((ens.draws()[0] - 2.6).abs() < 1e-15);
    }

    #[test]
    fn zero_scores_give_zero_draws() {
        let scores = ScoreTensor {
            scores: DMatrix::zeros(5, 3),
            edges: vec![(0, 1), (0, 2), (1, 2)],
        };
        let ens = build_ensemble(&scores, 10, 3).unwrap();
        assert!(ens.draws().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stkb_layout() {
        let e = BootstrapEnsemble::from_draws(vec![(0, 1), (2, 3)], 2, vec![0.5, 1.5, 2.5, 3.5], Some(1)).unwrap();
        let mut buf = Vec::new();
        e.write_stkb(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"STKB");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 2 * 16 + 4 * 8);
        let back = BootstrapEnsemble::read_stkb(&buf[..]).unwrap();
        assert_eq!(back, e);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(BootstrapEnsemble::read_stkb(&bad[..]), Err(Error::Format(_))));
    }

    #[test]
    fn gaussian_ensemble_rejects_zero_sd_and_indefinite() {
        let s = CovMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert!(gaussian_quantile_ensemble(&DMatrix::identity(2, 2), &s, 0.0, 10, 1).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            gaussian_ensemble_from_cov(&bad, 10, 1),
            Err(Error::InvalidCovariance { .. })
        ));
    }

    #[test]
    fn perfectly_correlated_pair() {
        let cov = DMatrix::from_element(2, 2, 1.0);
        let e = gaussian_ensemble_from_cov(&cov, 200, 9).unwrap();
        for b in 0..200 {
            let row = e.draw_row(b);
            assert!((row[0] - row[1]).abs() < 1e-5 * (1.0 + row[0]));
        }
    }
}
