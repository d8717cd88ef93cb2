//! Replicated simulation experiments and Monte-Carlo checks.

mod ccb;
mod config;
mod coverage;
mod experiment;

pub use ccb::{
    ar1_cov, ccb_counterexample, default_t_grid, delta_inf_study, verify_ccb, write_ccb_csv, CcbRow, CcbTable,
    Coupling, DeltaStudyRow,
};
pub use config::{ExperimentConfig, GraphSpec, LambdaPolicy, Mode, MultitaskSpec, SPEC_VERSION};
pub use coverage::{quantile_coverage, CoverageConfig, CoverageReport};
pub use experiment::{
    estimate_precision, ggm_replicate, ggm_select, multitask_replicate, multitask_select, plant_multitask,
    run_experiment, run_ggm_experiment, run_multitask_experiment, score_selection, write_replicates_csv,
    ExperimentReport, FailureRecord, GgmRun, ReplicateRecord, RunMetadata,
};
