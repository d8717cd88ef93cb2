//! Combinatorial hub selection with FDR control for Gaussian graphical
//! models and multitask regression.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod ggm;
pub mod graphgen;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod multitask;
pub mod quantile;
pub mod rng;
pub mod select;
pub mod solvers;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use ggm::{onestep_debias, DebiasedMatrix, Edge, ScoreTensor};
pub use multitask::{fit_multitask, select_hub_responses, MultitaskFit};
pub use quantile::{BootstrapEnsemble, QuantileQuery};
pub use select::{bh_select, startrek, HypothesisConfig, SelectionResult};
pub use solvers::{CovMatrix, SolverConfig};
