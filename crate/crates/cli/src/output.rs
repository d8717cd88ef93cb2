use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use startrek::io::fmt_f64;
use startrek::rng::GENERATOR;
use startrek::SelectionResult;

/// The only part of a machine output allowed to differ between runs with the
/// same inputs.
#[derive(Debug, Serialize)]
pub struct Metadata {
    pub tool_version: &'static str,
    pub rng: &'static str,
    pub unix_time: u64,
    pub threads: usize,
    pub runtime_ms: f64,
}

impl Metadata {
    pub fn since(start: Instant) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            rng: GENERATOR,
            unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            threads: rayon::current_num_threads(),
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }
}

pub fn out_dir(dir: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    startrek::io::save_json(path, value).with_context(|| format!("writing {}", path.display()))
}

/// `label,alpha,selected`, one row per node in input order.
pub fn write_alpha_csv(path: &Path, labels: &[String], sel: &SelectionResult) -> anyhow::Result<()> {
    let mut chosen = vec![false; labels.len()];
    for &j in &sel.selected {
        chosen[j] = true;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["label", "alpha", "selected"])?;
    for (j, label) in labels.iter().enumerate() {
        w.write_record([
            label.as_str(),
            &fmt_f64(sel.alpha[j]),
            if chosen[j] { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SelectionDoc<'a, C: Serialize, F: Serialize> {
    pub config: &'a C,
    pub n: usize,
    pub d: usize,
    pub fit: F,
    pub labels: &'a [String],
    pub alpha: &'a [f64],
    pub selected: Vec<&'a str>,
    pub selected_index: &'a [usize],
    pub j_max: usize,
    pub bh_threshold: f64,
    pub metadata: Metadata,
}

impl<'a, C: Serialize, F: Serialize> SelectionDoc<'a, C, F> {
    pub fn new(
        config: &'a C,
        n: usize,
        fit: F,
        labels: &'a [String],
        sel: &'a SelectionResult,
        metadata: Metadata,
    ) -> Self {
        Self {
            config,
            n,
            d: labels.len(),
            fit,
            labels,
            alpha: &sel.alpha,
            selected: sel.selected.iter().map(|&j| labels[j].as_str()).collect(),
            selected_index: &sel.selected,
            j_max: sel.j_max,
            bh_threshold: sel.bh_threshold,
            metadata,
        }
    }
}
