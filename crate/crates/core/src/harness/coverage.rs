use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::LambdaPolicy;
use crate::data::DataMatrix;
use crate::error::{invalid, Result};
use crate::ggm::{build_scores, onestep_debias, standardize, upper_edges};
use crate::graphgen::{generate_graph, sample_gaussian, GraphKind, GraphParams};
use crate::quantile::build_ensemble;
use crate::rng::{derive_seed, TAG_BOOT, TAG_CV, TAG_DATA, TAG_GRAPH};
use crate::solvers::{default_lambda_grid, glasso, glasso_cv, CovMatrix, SolverConfig};

/// Calibration study of the bootstrap quantile over all `d(d−1)/2` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub kind: GraphKind,
    pub d: usize,
    pub n: usize,
    pub p_groups: usize,
    pub boot: usize,
    pub replicates: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub lambda: LambdaPolicy,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            kind: GraphKind::Random,
            d: 50,
            n: 400,
            p_groups: 5,
            boot: 1000,
            replicates: 200,
            alphas: vec![0.05, 0.1, 0.2],
            seed: 0,
            lambda: LambdaPolicy::Cv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alphas: Vec<f64>,
    /// Fraction of replicates with `T > ĉ(α)`, per α.
    pub exceed_rate: Vec<f64>,
    /// `T = √n max |Θ̃_jk − Θ⋆_jk|` per replicate, both standardized.
    pub stats: Vec<f64>,
    /// `ĉ(α)` per replicate and α.
    pub thresholds: Vec<Vec<f64>>,
}

fn replicate(cfg: &CoverageConfig, r: usize) -> Result<(f64, Vec<f64>)> {
    let seed = |tag| derive_seed(cfg.seed, tag, r as u64);
    let graph = generate_graph(cfg.kind, cfg.d, cfg.p_groups, &GraphParams::default(), seed(TAG_GRAPH))?;
    let x = sample_gaussian(&graph.precision, cfg.n, seed(TAG_DATA))?;
    let sigma_hat = CovMatrix::from_data(&x)?;
    let solver = SolverConfig::default();
    let theta_hat = match cfg.lambda {
        LambdaPolicy::Cv => {
            let grid = default_lambda_grid(&sigma_hat);
            glasso_cv(&DataMatrix::unlabeled(x.clone()), &grid, &solver, seed(TAG_CV))?.theta
        }
        LambdaPolicy::Fixed(l) => glasso(&sigma_hat, l, &solver)?.theta,
    };
    let deb = onestep_debias(&theta_hat, &sigma_hat, cfg.n)?;
    let edges = upper_edges(cfg.d);
    let scores = build_scores(&theta_hat, &x, &edges)?;
    let ens = build_ensemble(&scores, cfg.boot, seed(TAG_BOOT))?;
    let truth = standardize(&graph.precision)?;
    let sqrt_n = (cfg.n as f64).sqrt();
    let t = edges
        .iter()
        .map(|&(j, k)| sqrt_n * (deb.theta_std[(j, k)] - truth[(j, k)]).abs())
        .fold(0.0, f64::max);
    let cols: Vec<usize> = (0..edges.len()).collect();
    let c = cfg
        .alphas
        .iter()
        .map(|&a| ens.c_hat_cols(a, &cols))
        .collect::<Result<Vec<_>>>()?;
    Ok((t, c))
}

pub fn quantile_coverage(cfg: &CoverageConfig) -> Result<CoverageReport> {
    if cfg.replicates == 0 || cfg.boot == 0 || cfg.d < 2 {
        return invalid("coverage study needs replicates, boot >= 1 and d >= 2");
    }
    if cfg.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return invalid("alphas must lie in (0, 1)");
    }
    let out = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| replicate(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let reps = out.len() as f64;
    let exceed_rate = (0..cfg.alphas.len())
        .map(|a| out.iter().filter(|(t, c)| *t > c[a]).count() as f64 / reps)
        .collect();
    let (stats, thresholds) = out.into_iter().unzip();
    Ok(CoverageReport {
        alphas: cfg.alphas.clone(),
        exceed_rate,
        stats,
        thresholds,
    })
}
