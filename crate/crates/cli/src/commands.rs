use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;
use startrek::graphgen::{generate_graph, ground_truth, GraphParams, GroundTruth};
use startrek::harness::{
    ar1_cov, ccb_counterexample, default_t_grid, delta_inf_study, estimate_precision, ggm_select, multitask_select,
    run_experiment, verify_ccb, write_ccb_csv, write_replicates_csv, CcbTable, DeltaStudyRow, ExperimentConfig,
};
use startrek::io::{load_matrix, preprocess, save_dense, DatasetFile};
use startrek::rng::{derive_seed, TAG_BOOT, TAG_CV};
use startrek::select::{EnsembleProvider, GgmBootstrap};
use startrek::{CovMatrix, DataMatrix, HypothesisConfig, SolverConfig};

use crate::args::{
    CcbArgs, CcbMode, CsvArgs, EnsembleArgs, GraphgenArgs, MultitaskArgs, SelectArgs, SimulateArgs, SolverArgs,
};
use crate::output::{out_dir, write_alpha_csv, write_json, Metadata, SelectionDoc};
use crate::{CmdResult, Failure};

fn solver_config(s: &SolverArgs) -> Result<SolverConfig, Failure> {
    let cfg = SolverConfig {
        max_iter: s.max_iter,
        tol: s.tol,
        cv_folds: s.cv_folds,
        ..SolverConfig::default()
    };
    cfg.validate().map_err(Failure::usage)?;
    if cfg.cv_folds < 2 {
        return Err(Failure::usage(anyhow!("--cv-folds must be at least 2")));
    }
    Ok(cfg)
}

fn hypothesis(k_tau: usize, q: f64, row_len: usize) -> Result<HypothesisConfig, Failure> {
    let hyp = HypothesisConfig { k_tau, q };
    hyp.validate(row_len).map_err(Failure::usage)?;
    Ok(hyp)
}

fn positive(name: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        return Err(Failure::usage(anyhow!("--{name} must be at least 1")));
    }
    Ok(())
}

/// Loads, optionally transforms, and centres a CSV matrix.
fn load_data(path: &Path, csv: &CsvArgs) -> Result<DataMatrix, Failure> {
    if !csv.delimiter.is_ascii() {
        return Err(Failure::usage(anyhow!("--delimiter must be a single ASCII character")));
    }
    let file = DatasetFile {
        path: path.to_path_buf(),
        header: csv.header.into(),
        delimiter: csv.delimiter as u8,
    };
    let raw = load_matrix(&file).with_context(|| format!("reading {}", path.display()))?;
    let x = preprocess(&raw, csv.log_transform, csv.standardize)
        .with_context(|| format!("preprocessing {}", path.display()))?;
    println!(
        "loaded {} observations of {} variables from {}",
        x.n(),
        x.d(),
        path.display()
    );
    Ok(x.centered())
}

#[derive(Serialize)]
struct GgmFitSummary {
    lambda: f64,
}

pub fn select(a: &SelectArgs) -> CmdResult {
    let start = Instant::now();
    positive("boot", a.boot)?;
    let solver = solver_config(&a.solver)?;
    let x = load_data(&a.data, &a.csv)?;
    let hyp = hypothesis(a.k_tau, a.q, x.d() - 1)?;
    let out = out_dir(&a.out)?;
    let run = ggm_select(&x.values, &hyp, a.boot, a.lambda, &solver, a.seed, 0)?;
    println!(
        "lambda = {:.4}, selected {} of {} nodes",
        run.lambda,
        run.selection.selected.len(),
        x.d()
    );
    write_alpha_csv(&out.join("alpha.csv"), &x.labels, &run.selection)?;
    let doc = SelectionDoc::new(
        a,
        x.n(),
        GgmFitSummary { lambda: run.lambda },
        &x.labels,
        &run.selection,
        Metadata::since(start),
    );
    write_json(&out.join("selection.json"), &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct MultitaskFitSummary<'a> {
    lambda0: f64,
    mu: f64,
    sigma: &'a [f64],
    degenerate_noise: &'a [bool],
    m_fallback: &'a [bool],
}

pub fn select_multitask(a: &MultitaskArgs) -> CmdResult {
    let start = Instant::now();
    positive("boot", a.boot)?;
    let mut solver = solver_config(&a.solver)?;
    for (name, v) in [("lambda", a.lambda), ("mu", a.mu)] {
        if v.is_some_and(|v| v <= 0.0 || !v.is_finite()) {
            return Err(Failure::usage(anyhow!("--{name} must be a positive number")));
        }
    }
    solver.lambda = a.lambda.unwrap_or(0.0);
    solver.mu = a.mu.unwrap_or(0.0);
    let x = load_data(&a.x, &a.csv)?;
    let y = load_data(&a.y, &a.csv)?;
    if x.n() != y.n() {
        return Err(Failure::usage(anyhow!("X has {} rows but Y has {}", x.n(), y.n())));
    }
    let hyp = hypothesis(a.k_tau, a.q, x.d())?;
    let out = out_dir(&a.out)?;
    let (fit, sel) = multitask_select(&x.values, &y.values, &hyp, a.boot, &solver, a.seed, 0)?;
    println!("selected {} of {} responses", sel.selected.len(), y.d());
    write_alpha_csv(&out.join("alpha.csv"), &y.labels, &sel)?;
    save_dense(&out.join("debiased.csv"), &fit.theta_d.transpose())?;
    let summary = MultitaskFitSummary {
        lambda0: fit.lambda0,
        mu: fit.mu,
        sigma: fit.sigma.as_slice(),
        degenerate_noise: &fit.degenerate_noise,
        m_fallback: &fit.m_fallback,
    };
    let doc = SelectionDoc::new(a, x.n(), summary, &y.labels, &sel, Metadata::since(start));
    write_json(&out.join("selection.json"), &doc)?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))
        .map_err(Failure::usage)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", a.config.display()))
        .map_err(Failure::usage)?;
    cfg.validate()
        .with_context(|| format!("invalid config {}", a.config.display()))
        .map_err(Failure::usage)?;
    let out = out_dir(&a.out)?;
    println!("running {} replicates (n = {}, d = {})", cfg.replicates, cfg.n, cfg.d);
    let report = run_experiment(&cfg)?;
    println!(
        "mean FDP {:.4} (se {:.4}), mean power {:.4}, {} failed",
        report.mean_fdp, report.se_fdp, report.mean_power, report.n_failed
    );
    write_json(&out.join("report.json"), &report)?;
    write_replicates_csv(&out.join("replicates.csv"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct TruthDoc<'a> {
    config: &'a GraphgenArgs,
    params: GraphParams,
    truth: GroundTruth,
}

pub fn graphgen(a: &GraphgenArgs) -> CmdResult {
    let mut params = GraphParams::default();
    if let Some(v) = a.v {
        params.v = v;
    }
    if let Some(u) = a.u {
        params.u = u;
    }
    if let Some(p) = a.connect_prob {
        params.connect_prob = p;
    }
    params.knn_k = a.knn_k.or(params.knn_k);
    params.validate().map_err(Failure::usage)?;
    if a.p_groups == 0 || a.d < a.p_groups {
        return Err(Failure::usage(anyhow!("need --d >= --p-groups >= 1")));
    }
    let out = out_dir(&a.out)?;
    let g = generate_graph(a.kind, a.d, a.p_groups, &params, a.seed)?;
    let truth = ground_truth(&g.adjacency, a.k_tau);
    println!(
        "{} graph: {} nodes, {} edges, {} hubs",
        a.kind.name(),
        a.d,
        g.edges().len(),
        truth.hubs.len()
    );
    write_json(&out.join("graph.json"), &g.to_json())?;
    save_dense(&out.join("precision.csv"), &g.precision)?;
    write_json(
        &out.join("truth.json"),
        &TruthDoc {
            config: a,
            params,
            truth,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CcbDoc<'a> {
    config: &'a CcbArgs,
    t_grid: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<&'a CcbTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_study: Option<&'a [DeltaStudyRow]>,
    metadata: Metadata,
}

fn read_cov(path: &Option<std::path::PathBuf>, flag: &str) -> Result<nalgebra::DMatrix<f64>, Failure> {
    let path = path
        .as_ref()
        .ok_or_else(|| Failure::usage(anyhow!("--mode files needs --{flag}")))?;
    Ok(load_matrix(&DatasetFile::new(path))
        .with_context(|| format!("reading {}", path.display()))?
        .values)
}

pub fn ccb_verify(a: &CcbArgs) -> CmdResult {
    let start = Instant::now();
    positive("mc", a.mc)?;
    if a.d < 2 {
        return Err(Failure::usage(anyhow!("--d must be at least 2")));
    }
    let bad = |r: f64| r.is_nan() || r.abs() >= 1.0;
    if bad(a.rho) || a.rho_v.is_some_and(bad) {
        return Err(Failure::usage(anyhow!("correlations must lie in (-1, 1)")));
    }
    let grid = default_t_grid(a.d);
    let coupling = a.coupling.into();
    let (table, study) = match a.mode {
        CcbMode::Identical => {
            let cov = ar1_cov(a.d, a.rho);
            (Some(verify_ccb(&cov, &cov, &grid, a.mc, a.seed, coupling)?), None)
        }
        CcbMode::Ar1 => {
            let rho_v = a
                .rho_v
                .ok_or_else(|| Failure::usage(anyhow!("--mode ar1 needs --rho-v")))?;
            let (u, v) = (ar1_cov(a.d, a.rho), ar1_cov(a.d, rho_v));
            (Some(verify_ccb(&u, &v, &grid, a.mc, a.seed, coupling)?), None)
        }
        CcbMode::Files => {
            let (u, v) = (read_cov(&a.cov_u, "cov-u")?, read_cov(&a.cov_v, "cov-v")?);
            (Some(verify_ccb(&u, &v, &grid, a.mc, a.seed, coupling)?), None)
        }
        CcbMode::Counterexample => (Some(ccb_counterexample(a.rho, &grid, a.mc, a.seed)?), None),
        CcbMode::Delta => (None, Some(delta_inf_study(a.d, a.rho, &a.deltas, &grid, a.mc, a.seed)?)),
    };
    let out = out_dir(&a.out)?;
    if let Some(t) = &table {
        println!("sup ratio deviation {:.4}", t.sup_dev);
        write_ccb_csv(&out.join("ccb.csv"), t)?;
    }
    if let Some(rows) = &study {
        let mut w = csv::Writer::from_path(out.join("delta.csv"))?;
        w.write_record(["delta", "sup_dev"])?;
        for r in rows {
            println!("delta {:<8} sup ratio deviation {:.4}", r.delta, r.sup_dev);
            w.write_record([startrek::io::fmt_f64(r.delta), startrek::io::fmt_f64(r.sup_dev)])?;
        }
        w.flush()?;
    }
    let doc = CcbDoc {
        config: a,
        t_grid: &grid,
        table: table.as_ref(),
        delta_study: study.as_deref(),
        metadata: Metadata::since(start),
    };
    write_json(&out.join("ccb.json"), &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct CachedRow {
    row: usize,
    file: String,
    edges: usize,
}

#[derive(Serialize)]
struct CacheManifest<'a> {
    config: &'a EnsembleArgs,
    lambda: f64,
    boot: usize,
    rows: Vec<CachedRow>,
    metadata: Metadata,
}

pub fn ensemble_cache(a: &EnsembleArgs) -> CmdResult {
    let start = Instant::now();
    positive("boot", a.boot)?;
    let solver = solver_config(&a.solver)?;
    let x = load_data(&a.data, &a.csv)?;
    let rows: Vec<usize> = if a.rows.is_empty() {
        (0..x.d()).collect()
    } else {
        a.rows.clone()
    };
    if let Some(&bad) = rows.iter().find(|&&j| j >= x.d()) {
        return Err(Failure::usage(anyhow!(
            "row {bad} out of range for {} variables",
            x.d()
        )));
    }
    let out = out_dir(&a.out)?;
    let sigma_hat = CovMatrix::from_data(&x.values)?;
    let (theta_hat, lambda) =
        estimate_precision(&x.values, &sigma_hat, a.lambda, &solver, derive_seed(a.seed, TAG_CV, 0))?;
    let provider = GgmBootstrap::new(&theta_hat, &x.values, a.boot, derive_seed(a.seed, TAG_BOOT, 0))?;
    let mut written = Vec::with_capacity(rows.len());
    for j in rows {
        let row = provider.row(j)?;
        let name = format!("row_{j}.stkb");
        let path = out.join(&name);
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        row.ensemble.write_stkb(BufWriter::new(f))?;
        written.push(CachedRow {
            row: j,
            file: name,
            edges: row.ensemble.n_edges(),
        });
    }
    println!("wrote {} ensembles with B = {}", written.len(), a.boot);
    let manifest = CacheManifest {
        config: a,
        lambda,
        boot: a.boot,
        rows: written,
        metadata: Metadata::since(start),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}
