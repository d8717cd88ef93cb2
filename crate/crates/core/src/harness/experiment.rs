use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LambdaPolicy, Mode};
use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::ggm::onestep_debias;
use crate::graphgen::{generate_graph, ground_truth, sample_gaussian};
use crate::io::fmt_f64;
use crate::multitask::{fit_multitask, select_hub_responses, MultitaskFit};
use crate::rng::{derive_seed, seeded_rng, GENERATOR, TAG_BOOT, TAG_CV, TAG_DATA, TAG_GRAPH, TAG_PLANT};
use crate::select::{bh_select, startrek, GgmBootstrap, HypothesisConfig, SelectionResult};
use crate::solvers::{default_lambda_grid, glasso, glasso_cv, CovMatrix, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub fdp: f64,
    /// `|selected ∩ hubs| / |hubs|`; 0 with `no_hubs` set when there are none.
    pub power: f64,
    pub no_hubs: bool,
    pub n_selected: usize,
    pub d0: usize,
    pub selected: Vec<usize>,
    pub hubs: Vec<usize>,
    pub alpha: Vec<f64>,
    /// Graphical-lasso penalty used (ggm mode).
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: usize,
    pub error: String,
}

/// Everything that varies between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub rng: String,
    pub unix_time: u64,
    /// Wall time per replicate, in replicate order (failures included).
    pub runtime_ms: Vec<f64>,
    pub total_ms: f64,
}

impl RunMetadata {
    fn now(runtime_ms: Vec<f64>, total_ms: f64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: GENERATOR.to_string(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            runtime_ms,
            total_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateRecord>,
    pub failures: Vec<FailureRecord>,
    pub n_failed: usize,
    pub mean_fdp: f64,
    /// Standard error of `mean_fdp`: sample standard deviation over `√R`.
    pub se_fdp: f64,
    pub mean_power: f64,
    pub mean_d0: f64,
    /// `q · d₀ / d`, averaged over replicates.
    pub reference_fdr: f64,
    pub metadata: RunMetadata,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl ExperimentReport {
    fn assemble(
        config: ExperimentConfig,
        replicates: Vec<ReplicateRecord>,
        failures: Vec<FailureRecord>,
        metadata: RunMetadata,
    ) -> Result<Self> {
        if replicates.is_empty() {
            let first = failures.first().map_or(String::new(), |f| f.error.clone());
            return Err(Error::InvalidInput(format!(
                "all replicates failed; first error: {first}"
            )));
        }
        let fdp: Vec<f64> = replicates.iter().map(|r| r.fdp).collect();
        let power: Vec<f64> = replicates.iter().map(|r| r.power).collect();
        let d0: Vec<f64> = replicates.iter().map(|r| r.d0 as f64).collect();
        let mean_fdp = mean(&fdp);
        let r = fdp.len() as f64;
        let se_fdp = if fdp.len() > 1 {
            (fdp.iter().map(|f| (f - mean_fdp).powi(2)).sum::<f64>() / (r - 1.0)).sqrt() / r.sqrt()
        } else {
            0.0
        };
        let mean_d0 = mean(&d0);
        let total = match config.mode {
            Mode::Ggm => config.d,
            Mode::Multitask => config.multitask.d1,
        } as f64;
        Ok(Self {
            reference_fdr: config.q * mean_d0 / total,
            n_failed: failures.len(),
            mean_fdp,
            se_fdp,
            mean_power: mean(&power),
            mean_d0,
            config,
            replicates,
            failures,
            metadata,
        })
    }

    /// The same runs re-thresholded at FDR level `q`; per-node p-values do
    /// not depend on `q`.
    pub fn rethreshold(&self, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return invalid(format!("q = {q} outside (0, 1)"));
        }
        let mut config = self.config.clone();
        config.q = q;
        let replicates = self
            .replicates
            .iter()
            .map(|r| {
                let sel = bh_select(&r.alpha, q);
                score_selection(r.replicate, &sel, &r.hubs, r.lambda)
            })
            .collect();
        Self::assemble(config, replicates, self.failures.clone(), self.metadata.clone())
    }
}

/// FDP and power of a selection against the true hub set.
pub fn score_selection(
    replicate: usize,
    sel: &SelectionResult,
    hubs: &[usize],
    lambda: Option<f64>,
) -> ReplicateRecord {
    let d = sel.alpha.len();
    let mut is_hub = vec![false; d];
    for &h in hubs {
        is_hub[h] = true;
    }
    let true_pos = sel.selected.iter().filter(|&&j| is_hub[j]).count();
    let false_pos = sel.selected.len() - true_pos;
    let no_hubs = hubs.is_empty();
    ReplicateRecord {
        replicate,
        fdp: false_pos as f64 / sel.selected.len().max(1) as f64,
        power: if no_hubs {
            0.0
        } else {
            true_pos as f64 / hubs.len() as f64
        },
        no_hubs,
        n_selected: sel.selected.len(),
        d0: d - hubs.len(),
        selected: sel.selected.clone(),
        hubs: hubs.to_vec(),
        alpha: sel.alpha.clone(),
        lambda,
    }
}

/// Graphical lasso under `policy`; returns the estimate and the penalty used.
/// `cv_seed` only matters for [`LambdaPolicy::Cv`].
pub fn estimate_precision(
    x: &DMatrix<f64>,
    sigma_hat: &CovMatrix,
    policy: LambdaPolicy,
    solver: &SolverConfig,
    cv_seed: u64,
) -> Result<(DMatrix<f64>, f64)> {
    Ok(match policy {
        LambdaPolicy::Cv => {
            let grid = default_lambda_grid(sigma_hat);
            let cv = glasso_cv(&DataMatrix::unlabeled(x.clone()), &grid, solver, cv_seed)?;
            (cv.theta, cv.lambda_star)
        }
        LambdaPolicy::Fixed(l) => (glasso(sigma_hat, l, solver)?.theta, l),
    })
}

/// Output of the GGM selection pipeline on one data matrix.
#[derive(Debug, Clone)]
pub struct GgmRun {
    pub selection: SelectionResult,
    pub lambda: f64,
    pub theta_std: DMatrix<f64>,
}

/// Graphical lasso, debiasing and the filter on centered data `x`. Seeds are
/// derived from `(seed, index)`.
pub fn ggm_select(
    x: &DMatrix<f64>,
    hyp: &HypothesisConfig,
    boot: usize,
    lambda: LambdaPolicy,
    solver: &SolverConfig,
    seed: u64,
    index: u64,
) -> Result<GgmRun> {
    let n = x.nrows();
    let sigma_hat = CovMatrix::from_data(x)?;
    let (theta_hat, lambda) = estimate_precision(x, &sigma_hat, lambda, solver, derive_seed(seed, TAG_CV, index))?;
    let deb = onestep_debias(&theta_hat, &sigma_hat, n)?;
    let provider = GgmBootstrap::new(&theta_hat, x, boot, derive_seed(seed, TAG_BOOT, index))?;
    let selection = startrek(&deb.theta_std, &provider, hyp, n)?;
    Ok(GgmRun {
        selection,
        lambda,
        theta_std: deb.theta_std,
    })
}

/// Multitask fit and response selection for `Y ≈ XΘᵀ`.
pub fn multitask_select(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    hyp: &HypothesisConfig,
    boot: usize,
    solver: &SolverConfig,
    seed: u64,
    index: u64,
) -> Result<(MultitaskFit, SelectionResult)> {
    let fit = fit_multitask(x, y, solver)?;
    let sel = select_hub_responses(&fit, hyp, boot, derive_seed(seed, TAG_BOOT, index))?;
    Ok((fit, sel))
}

/// One GGM replicate: graph, data, graphical lasso, debiasing, filter.
pub fn ggm_replicate(cfg: &ExperimentConfig, r: usize) -> Result<ReplicateRecord> {
    let seed = |tag| derive_seed(cfg.seed, tag, r as u64);
    let g = &cfg.graph;
    let graph = generate_graph(g.kind, cfg.d, g.p_groups, &g.params, seed(TAG_GRAPH))?;
    let x = sample_gaussian(&graph.precision, cfg.n, seed(TAG_DATA))?;
    let hyp = HypothesisConfig {
        k_tau: cfg.k_tau,
        q: cfg.q,
    };
    let run = ggm_select(&x, &hyp, cfg.boot, cfg.lambda, &cfg.solver, cfg.seed, r as u64)?;
    let truth = ground_truth(&graph.adjacency, cfg.k_tau);
    Ok(score_selection(r, &run.selection, &truth.hubs, Some(run.lambda)))
}

/// Planted multitask data `(X, Y, Θ)` for replicate `r`: `X ~ N(0, I)`,
/// `Y = XΘᵀ + σE`. Hub rows of `Θ` have `k_tau` entries `±signal`; the other
/// rows have between 0 and `k_tau − 1`.
pub fn plant_multitask(cfg: &ExperimentConfig, r: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = &cfg.multitask;
    let (n, d2, d1) = (cfg.n, cfg.d, m.d1);
    let mut rng = seeded_rng(derive_seed(cfg.seed, TAG_PLANT, r as u64));
    let mut rows: Vec<usize> = (0..d1).collect();
    rows.shuffle(&mut rng);
    let mut is_hub = vec![false; d1];
    for &j in &rows[..m.hubs] {
        is_hub[j] = true;
    }
    let mut theta = DMatrix::zeros(d1, d2);
    for (j, &hub) in is_hub.iter().enumerate() {
        let size = if hub { cfg.k_tau } else { rng.random_range(0..cfg.k_tau) };
        for k in index::sample(&mut rng, d2, size) {
            theta[(j, k)] = if rng.random::<bool>() { m.signal } else { -m.signal };
        }
    }
    let mut rng = seeded_rng(derive_seed(cfg.seed, TAG_DATA, r as u64));
    let x = DMatrix::from_fn(n, d2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let e = DMatrix::from_fn(n, d1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * theta.transpose() + e * m.noise_sd;
    (x, y, theta)
}

pub fn multitask_replicate(cfg: &ExperimentConfig, r: usize) -> Result<ReplicateRecord> {
    let (x, y, theta) = plant_multitask(cfg, r);
    let hyp = HypothesisConfig {
        k_tau: cfg.k_tau,
        q: cfg.q,
    };
    let (_, sel) = multitask_select(&x, &y, &hyp, cfg.boot, &cfg.solver, cfg.seed, r as u64)?;
    let hubs: Vec<usize> = (0..theta.nrows())
        .filter(|&j| theta.row(j).iter().filter(|v| **v != 0.0).count() >= cfg.k_tau)
        .collect();
    Ok(score_selection(r, &sel, &hubs, None))
}

fn run_with(
    cfg: &ExperimentConfig,
    one: fn(&ExperimentConfig, usize) -> Result<ReplicateRecord>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes: Vec<(Result<ReplicateRecord>, f64)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let t = Instant::now();
            let out = one(cfg, r);
            (out, t.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    let mut runtime_ms = Vec::with_capacity(outcomes.len());
    for (r, (out, ms)) in outcomes.into_iter().enumerate() {
        runtime_ms.push(ms);
        match out {
            Ok(rec) => replicates.push(rec),
            Err(e) => failures.push(FailureRecord {
                replicate: r,
                error: e.to_string(),
            }),
        }
    }
    let meta = RunMetadata::now(runtime_ms, start.elapsed().as_secs_f64() * 1e3);
    ExperimentReport::assemble(cfg.clone(), replicates, failures, meta)
}

pub fn run_ggm_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.mode != Mode::Ggm {
        return invalid("config mode is not ggm");
    }
    run_with(cfg, ggm_replicate)
}

pub fn run_multitask_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.mode != Mode::Multitask {
        return invalid("config mode is not multitask");
    }
    run_with(cfg, multitask_replicate)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.mode {
        Mode::Ggm => run_ggm_experiment(cfg),
        Mode::Multitask => run_multitask_experiment(cfg),
    }
}

/// Flat per-replicate CSV: `replicate,fdp,power,n_selected,d0,runtime_ms`.
pub fn write_replicates_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["replicate", "fdp", "power", "n_selected", "d0", "runtime_ms"])
        .map_err(io)?;
    for rec in &report.replicates {
        let ms = report
            .metadata
            .runtime_ms
            .get(rec.replicate)
            .copied()
            .unwrap_or(f64::NAN);
        w.write_record([
            rec.replicate.to_string(),
            fmt_f64(rec.fdp),
            fmt_f64(rec.power),
            rec.n_selected.to_string(),
            rec.d0.to_string(),
            format!("{ms:.3}"),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
