use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::graphgen::{GraphKind, GraphParams};
use crate::solvers::SolverConfig;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ggm,
    Multitask,
}

/// Penalty for the graphical lasso: cross-validated or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LambdaPolicy {
    #[default]
    Cv,
    Fixed(f64),
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(LambdaPolicy::Cv);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaPolicy::Fixed(v)),
            _ => invalid(format!("lambda must be 'cv' or a positive number, got '{s}'")),
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Cv => f.write_str("cv"),
            LambdaPolicy::Fixed(v) => write!(f, "{v:?}"),
        }
    }
}

impl Serialize for LambdaPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LambdaPolicy::Cv => s.serialize_str("cv"),
            LambdaPolicy::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Num(v) => format!("{v:?}"),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub p_groups: usize,
    #[serde(default)]
    pub params: GraphParams,
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self {
            kind: GraphKind::Hub,
            p_groups: 1,
            params: GraphParams::default(),
        }
    }
}

/// Planted multitask model: `d1` responses over `d` predictors, `hubs` of
/// them with `k_tau` nonzero coefficients of magnitude `signal`, the rest
/// with fewer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultitaskSpec {
    pub d1: usize,
    pub hubs: usize,
    pub signal: f64,
    pub noise_sd: f64,
}

impl Default for MultitaskSpec {
    fn default() -> Self {
        Self {
            d1: 40,
            hubs: 10,
            signal: 0.8,
            noise_sd: 1.0,
        }
    }
}

fn default_boot() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec_version: u32,
    pub mode: Mode,
    pub n: usize,
    /// Number of nodes (ggm) or predictors (multitask).
    pub d: usize,
    pub k_tau: usize,
    pub q: f64,
    #[serde(default = "default_boot")]
    pub boot: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub graph: GraphSpec,
    #[serde(default)]
    pub lambda: LambdaPolicy,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub multitask: MultitaskSpec,
}

impl ExperimentConfig {
    /// Desk-scale GGM defaults: hub graph, 10 groups, CV penalty.
    pub fn ggm(kind: GraphKind, n: usize, d: usize, p_groups: usize) -> Self {
        Self {
            spec_version: SPEC_VERSION,
            mode: Mode::Ggm,
            n,
            d,
            k_tau: 3,
            q: 0.1,
            boot: default_boot(),
            replicates: 1,
            seed: 0,
            graph: GraphSpec {
                kind,
                p_groups,
                params: GraphParams::default(),
            },
            lambda: LambdaPolicy::Cv,
            solver: SolverConfig::default(),
            multitask: MultitaskSpec::default(),
        }
    }

    pub fn multitask(n: usize, d2: usize, spec: MultitaskSpec) -> Self {
        Self {
            mode: Mode::Multitask,
            multitask: spec,
            ..Self::ggm(GraphKind::Hub, n, d2, 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return invalid(format!(
                "spec_version must be {SPEC_VERSION}, got {}",
                self.spec_version
            ));
        }
        if self.replicates == 0 {
            return invalid("replicates must be at least 1");
        }
        if self.boot == 0 {
            return invalid("boot must be at least 1");
        }
        if self.n < 2 || self.d < 2 {
            return invalid("need n >= 2 and d >= 2");
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return invalid(format!("q = {} outside (0, 1)", self.q));
        }
        self.solver.validate()?;
        match self.mode {
            Mode::Ggm => {
                if self.k_tau == 0 || self.k_tau > self.d - 1 {
                    return invalid(format!("k_tau = {} outside [1, {}]", self.k_tau, self.d - 1));
                }
                self.graph.params.validate()?;
                if self.graph.p_groups == 0 || self.graph.p_groups > self.d {
                    return invalid("p_groups must lie in [1, d]");
                }
                if self.lambda == LambdaPolicy::Cv && self.n < self.solver.cv_folds {
                    return invalid("n smaller than the number of CV folds");
                }
            }
            Mode::Multitask => {
                let m = &self.multitask;
                if self.k_tau == 0 || self.k_tau > self.d {
                    return invalid(format!("k_tau = {} outside [1, {}]", self.k_tau, self.d));
                }
                if m.d1 == 0 || m.hubs > m.d1 {
                    return invalid("multitask needs d1 >= 1 and hubs <= d1");
                }
                if !(m.noise_sd > 0.0) || !m.signal.is_finite() {
                    return invalid("multitask needs noise_sd > 0 and a finite signal");
                }
            }
        }
        Ok(())
    }
}
