//! Synthetic graphs, their precision matrices, and ground-truth bookkeeping.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ggm::Edge;
use crate::rng::{derive_seed, seeded_rng, TAG_GRAPH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Hub,
    Random,
    #[serde(alias = "scale-free", alias = "scale_free")]
    Scalefree,
    Knn,
}

impl GraphKind {
    pub const ALL: [GraphKind; 4] = [GraphKind::Hub, GraphKind::Random, GraphKind::Scalefree, GraphKind::Knn];

    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Hub => "hub",
            GraphKind::Random => "random",
            GraphKind::Scalefree => "scalefree",
            GraphKind::Knn => "knn",
        }
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hub" => Ok(GraphKind::Hub),
            "random" => Ok(GraphKind::Random),
            "scalefree" | "scale-free" | "scale_free" => Ok(GraphKind::Scalefree),
            "knn" => Ok(GraphKind::Knn),
            other => invalid(format!("unknown graph kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    /// Off-diagonal precision value on edges.
    pub v: f64,
    /// Eigenvalue margin added to the diagonal.
    pub u: f64,
    /// Edge probability for random graphs.
    pub connect_prob: f64,
    /// Fixed neighbour count for knn graphs; `None` draws each node's count
    /// from {1, 2, 3, 4} with mass {0.4, 0.3, 0.2, 0.1}.
    pub knn_k: Option<usize>,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            v: 0.4,
            u: 0.1,
            connect_prob: 0.15,
            knn_k: None,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if !self.v.is_finite() || !(self.u > 0.0) || !self.u.is_finite() {
            return invalid("graph params need finite v and u > 0");
        }
        if !(0.0..=1.0).contains(&self.connect_prob) {
            return invalid("connect_prob outside [0, 1]");
        }
        if self.knn_k == Some(0) {
            return invalid("knn_k must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphModel {
    pub kind: GraphKind,
    pub params: GraphParams,
    pub seed: u64,
    pub adjacency: DMatrix<u8>,
    pub precision: DMatrix<f64>,
    /// Sorted node lists, one per group.
    pub groups: Vec<Vec<usize>>,
}

/// On-disk form of a [`GraphModel`]: the precision matrix is rebuilt from the
/// edge list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub kind: GraphKind,
    pub d: usize,
    pub params: GraphParams,
    pub seed: u64,
    pub groups: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
}

impl GraphModel {
    pub fn d(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Edges `(i, j)` with `i < j`, lexicographic.
    pub fn edges(&self) -> Vec<Edge> {
        let d = self.d();
        let mut out = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if self.adjacency[(i, j)] != 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            kind: self.kind,
            d: self.d(),
            params: self.params,
            seed: self.seed,
            groups: self.groups.clone(),
            edges: self.edges(),
        }
    }

    pub fn from_json(g: &GraphJson) -> Result<Self> {
        g.params.validate()?;
        let mut adjacency = DMatrix::zeros(g.d, g.d);
        for &(i, j) in &g.edges {
            if i >= g.d || j >= g.d || i == j {
                return invalid(format!("bad edge ({i}, {j})"));
            }
            adjacency[(i, j)] = 1;
            adjacency[(j, i)] = 1;
        }
        let precision = precision_from_adjacency(&adjacency, g.params.v, g.params.u)?;
        Ok(Self {
            kind: g.kind,
            params: g.params,
            seed: g.seed,
            adjacency,
            precision,
            groups: g.groups.clone(),
        })
    }
}

/// `Θ = vA + (|λ_min(vA)| + u) I`, checked positive definite.
pub fn precision_from_adjacency(adj: &DMatrix<u8>, v: f64, u: f64) -> Result<DMatrix<f64>> {
    let d = adj.nrows();
    let va = DMatrix::from_fn(d, d, |i, j| if adj[(i, j)] != 0 { v } else { 0.0 });
    let shift = if d > 0 {
        crate::linalg::min_eigenvalue(&va).abs() + u
    } else {
        u
    };
    let theta = va + DMatrix::identity(d, d) * shift;
    if d > 0 && !crate::linalg::is_pd(&theta) {
        return Err(Error::InvalidCovariance {
            min_eigenvalue: crate::linalg::min_eigenvalue(&theta),
        });
    }
    Ok(theta)
}

fn partition(d: usize, p: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut nodes: Vec<usize> = (0..d).collect();
    nodes.shuffle(&mut seeded_rng(derive_seed(seed, TAG_GRAPH, u64::MAX)));
    let base = d / p;
    let extra = d % p;
    let mut groups = Vec::with_capacity(p);
    let mut start = 0;
    for g in 0..p {
        let size = base + usize::from(g < extra);
        let mut members = nodes[start..start + size].to_vec();
        members.sort_unstable();
        groups.push(members);
        start += size;
    }
    groups
}

fn knn_draw<R: Rng>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    match u {
        u if u < 0.4 => 1,
        u if u < 0.7 => 2,
        u if u < 0.9 => 3,
        _ => 4,
    }
}

/// Local edges `(a, b)` among positions `0..m` of one group.
fn group_edges(kind: GraphKind, m: usize, params: &GraphParams, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = seeded_rng(seed);
    let mut edges = Vec::new();
    match kind {
        GraphKind::Hub => {
            if m >= 2 {
                let hub = rng.random_range(0..m);
                edges.extend((0..m).filter(|&k| k != hub).map(|k| (hub, k)));
            }
        }
        GraphKind::Random => {
            for a in 0..m {
                for b in a + 1..m {
                    if rng.random::<f64>() < params.connect_prob {
                        edges.push((a, b));
                    }
                }
            }
        }
        GraphKind::Scalefree => {
            // Preferential attachment, one edge per new node, seeded with a
            // single edge. `ends` lists every edge endpoint, so a uniform pick
            // from it is degree-proportional.
            edges.push((0, 1));
            let mut ends = vec![0, 1];
            for new in 2..m {
                let target = ends[rng.random_range(0..ends.len())];
                edges.push((target, new));
                ends.push(target);
                ends.push(new);
            }
            if m >= 3 {
                let present = |a: usize, b: usize, e: &[(usize, usize)]| {
                    e.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
                };
                let missing: Vec<(usize, usize)> = (0..m)
                    .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
                    .filter(|&(a, b)| !present(a, b, &edges))
                    .collect();
                if !missing.is_empty() {
                    edges.push(missing[rng.random_range(0..missing.len())]);
                }
            }
        }
        GraphKind::Knn => {
            for a in 0..m {
                let k = params
                    .knn_k
                    .unwrap_or_else(|| knn_draw(&mut rng))
                    .min(m.saturating_sub(1));
                let mut picked = 0;
                let mut step = 1;
                while picked < k {
                    for off in [step as isize, -(step as isize)] {
                        if picked == k {
                            break;
                        }
                        let b = (a as isize + off).rem_euclid(m as isize) as usize;
                        if b != a && !edges.contains(&(a.min(b), a.max(b))) {
                            edges.push((a.min(b), a.max(b)));
                            picked += 1;
                        } else if b != a {
                            // Already linked from the other side; still counts.
                            picked += 1;
                        }
                    }
                    step += 1;
                }
            }
        }
    }
    edges
}

pub fn generate_graph(
    kind: GraphKind,
    d: usize,
    p_groups: usize,
    params: &GraphParams,
    seed: u64,
) -> Result<GraphModel> {
    params.validate()?;
    if p_groups == 0 || d < p_groups {
        return invalid(format!("need d >= p_groups >= 1, got d = {d}, p_groups = {p_groups}"));
    }
    let groups = partition(d, p_groups, seed);
    if kind == GraphKind::Scalefree && groups.iter().any(|g| g.len() < 2) {
        return invalid("scale-free groups need at least 2 nodes");
    }
    let mut adjacency = DMatrix::<u8>::zeros(d, d);
    for (g, members) in groups.iter().enumerate() {
        for (a, b) in group_edges(kind, members.len(), params, derive_seed(seed, TAG_GRAPH, g as u64)) {
            let (i, j) = (members[a], members[b]);
            adjacency[(i, j)] = 1;
            adjacency[(j, i)] = 1;
        }
    }
    let precision = precision_from_adjacency(&adjacency, params.v, params.u)?;
    Ok(GraphModel {
        kind,
        params: *params,
        seed,
        adjacency,
        precision,
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub degrees: Vec<usize>,
    pub h0: Vec<usize>,
    pub hubs: Vec<usize>,
    pub d0: usize,
    pub s_count: u64,
    /// Number of connected components.
    pub p: usize,
}

pub fn ground_truth(adj: &DMatrix<u8>, k_tau: usize) -> GroundTruth {
    let d = adj.nrows();
    let degrees: Vec<usize> = (0..d)
        .map(|i| (0..d).filter(|&j| j != i && adj[(i, j)] != 0).count())
        .collect();
    let (h0, hubs): (Vec<usize>, Vec<usize>) = (0..d).partition(|&j| degrees[j] < k_tau);
    GroundTruth {
        d0: h0.len(),
        s_count: s_count(adj, &h0),
        p: components(adj),
        degrees,
        h0,
        hubs,
    }
}

/// Bitset of the closed neighbourhood of every node.
fn closed_neighbourhoods(adj: &DMatrix<u8>) -> Vec<Vec<u64>> {
    let d = adj.nrows();
    let words = d.div_ceil(64);
    (0..d)
        .map(|i| {
            let mut bits = vec![0u64; words];
            for j in 0..d {
                if i == j || adj[(i, j)] != 0 {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            bits
        })
        .collect()
}

/// Size of the dependence set: null pairs `j₁ < j₂` that are not adjacent,
/// with ordered connectors `k₁ ∈ N[j₂] \ N[j₁]` and `k₂ ∈ N[j₁] \ N[j₂]`,
/// where `N[·]` is the closed neighbourhood (diagonal entries are nonzero).
pub fn s_count(adj: &DMatrix<u8>, h0: &[usize]) -> u64 {
    let nb = closed_neighbourhoods(adj);
    let diff = |a: &[u64], b: &[u64]| -> u64 { a.iter().zip(b).map(|(x, y)| (x & !y).count_ones() as u64).sum() };
    let mut total = 0u64;
    for (a, &j1) in h0.iter().enumerate() {
        for &j2 in &h0[a + 1..] {
            if adj[(j1, j2)] != 0 {
                continue;
            }
            total += diff(&nb[j2], &nb[j1]) * diff(&nb[j1], &nb[j2]);
        }
    }
    total
}

fn components(adj: &DMatrix<u8>) -> usize {
    let d = adj.nrows();
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut count = d;
    for i in 0..d {
        for j in i + 1..d {
            if adj[(i, j)] != 0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                    count -= 1;
                }
            }
        }
    }
    count
}

/// `n` rows drawn from `N(0, Θ⁻¹)`: with `Θ = LLᵀ`, each row is `L⁻ᵀz`.
pub fn sample_gaussian(theta: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = theta.nrows();
    let chol = theta.clone().cholesky().ok_or_else(|| Error::InvalidCovariance {
        min_eigenvalue: crate::linalg::min_eigenvalue(theta),
    })?;
    let mut rng = seeded_rng(seed);
    let z = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let lt = chol.l().transpose();
    let x = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::InvalidInput("singular Cholesky factor".into()))?;
    Ok(x.transpose())
}
