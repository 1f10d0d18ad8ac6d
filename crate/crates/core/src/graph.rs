//! Undirected graph topologies: the fixed structure corpus, connected
//! Erdős–Rényi sampling, and uniform spanning-tree statistics.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Default retry cap for rejection sampling of connected random graphs.
pub const ER_RETRY_CAP: usize = 10_000;

/// An undirected simple graph on nodes `0..n`.
///
/// Edges are stored as `(i, j)` with `i < j`, sorted and deduplicated.
/// Adjacency lists carry `(neighbor, edge index)` pairs sorted by neighbor,
/// where the edge index points into `edges()` (and into any per-edge data
/// aligned with it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphTopology {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl GraphTopology {
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("node count must be >= 1".into()));
        }
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(Error::InvalidTopology(format!("self-loop at node {}", e.0)));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            if e.1 >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({}, {}) out of range for n={}",
                    e.0, e.1, n
                )));
            }
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(Error::InvalidTopology("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (idx, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push((j, idx));
            adjacency[j].push((i, idx));
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self { n, edges, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs of `i`, sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Connectivity by breadth-first traversal.
    pub fn is_connected(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Independent cycle count `|E| - n + 1` of a connected graph.
    pub fn cyclomatic_number(&self) -> usize {
        (self.edges.len() + 1).saturating_sub(self.n)
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n && self.is_connected()
    }

    /// Longest shortest path, by BFS from every node.
    pub fn diameter(&self) -> usize {
        let mut diameter = 0;
        for start in 0..self.n {
            let mut dist = vec![usize::MAX; self.n];
            dist[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for &d in &dist {
                if d != usize::MAX {
                    diameter = diameter.max(d);
                }
            }
        }
        diameter
    }
}

/// The structure corpus: thirteen deterministic families plus free-form
/// Erdős–Rényi graphs.
///
/// The fixed families span trees, a single loop, sparse grids, and
/// increasingly dense graphs up to complete. The four `FixedEr*` kinds are
/// connected Erdős–Rényi draws frozen by an internal seed derived from
/// `(kind, n)`, so they are deterministic templates, not fresh samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructureKind {
    Chain,
    Star,
    BinaryTree,
    Cycle,
    Ladder,
    Grid,
    Barbell,
    Wheel,
    FixedEr1,
    FixedEr2,
    FixedEr3,
    FixedEr4,
    Complete,
    ErdosRenyi(f64),
}

/// The thirteen deterministic training structures, sparse to dense.
pub const CLASSIC_STRUCTURES: [StructureKind; 13] = [
    StructureKind::Chain,
    StructureKind::Star,
    StructureKind::BinaryTree,
    StructureKind::Cycle,
    StructureKind::Ladder,
    StructureKind::Grid,
    StructureKind::Barbell,
    StructureKind::Wheel,
    StructureKind::FixedEr1,
    StructureKind::FixedEr2,
    StructureKind::FixedEr3,
    StructureKind::FixedEr4,
    StructureKind::Complete,
];

impl StructureKind {
    pub fn is_classic(&self) -> bool {
        !matches!(self, StructureKind::ErdosRenyi(_))
    }

    /// Edge probability of the frozen Erdős–Rényi templates.
    fn template_q(&self) -> Option<f64> {
        match self {
            StructureKind::FixedEr1 => Some(0.3),
            StructureKind::FixedEr2 => Some(0.45),
            StructureKind::FixedEr3 => Some(0.6),
            StructureKind::FixedEr4 => Some(0.8),
            _ => None,
        }
    }

    fn template_tag(&self) -> u64 {
        match self {
            StructureKind::FixedEr1 => 1,
            StructureKind::FixedEr2 => 2,
            StructureKind::FixedEr3 => 3,
            StructureKind::FixedEr4 => 4,
            _ => 0,
        }
    }

    pub fn parse(name: &str) -> Option<StructureKind> {
        let kind = match name {
            "chain" => StructureKind::Chain,
            "star" => StructureKind::Star,
            "binary_tree" => StructureKind::BinaryTree,
            "cycle" => StructureKind::Cycle,
            "ladder" => StructureKind::Ladder,
            "grid" => StructureKind::Grid,
            "barbell" => StructureKind::Barbell,
            "wheel" => StructureKind::Wheel,
            "fixed_er_1" => StructureKind::FixedEr1,
            "fixed_er_2" => StructureKind::FixedEr2,
            "fixed_er_3" => StructureKind::FixedEr3,
            "fixed_er_4" => StructureKind::FixedEr4,
            "complete" => StructureKind::Complete,
            _ => return None,
        };
        Some(kind)
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StructureKind::Chain => "chain",
            StructureKind::Star => "star",
            StructureKind::BinaryTree => "binary_tree",
            StructureKind::Cycle => "cycle",
            StructureKind::Ladder => "ladder",
            StructureKind::Grid => "grid",
            StructureKind::Barbell => "barbell",
            StructureKind::Wheel => "wheel",
            StructureKind::FixedEr1 => "fixed_er_1",
            StructureKind::FixedEr2 => "fixed_er_2",
            StructureKind::FixedEr3 => "fixed_er_3",
            StructureKind::FixedEr4 => "fixed_er_4",
            StructureKind::Complete => "complete",
            StructureKind::ErdosRenyi(q) => return write!(f, "er(q={q})"),
        };
        f.write_str(name)
    }
}

fn construction_error(kind: StructureKind, n: usize, reason: &str) -> Error {
    Error::Construction {
        kind: kind.to_string(),
        n,
        reason: reason.into(),
    }
}

/// Build one of the deterministic structures on `n` nodes.
///
/// Every classic kind yields a connected graph; the same kind at a larger
/// `n` scales within the same family. Errors when the kind cannot be formed
/// on `n` nodes (e.g. a square grid on non-square `n`).
pub fn build_topology(kind: StructureKind, n: usize) -> Result<GraphTopology> {
    if n < 2 {
        return Err(construction_error(kind, n, "need at least 2 nodes"));
    }
    let edges: Vec<(usize, usize)> = match kind {
        StructureKind::ErdosRenyi(_) => {
            return Err(construction_error(
                kind,
                n,
                "not a deterministic structure; use sample_erdos_renyi_connected",
            ))
        }
        StructureKind::Chain => (0..n - 1).map(|i| (i, i + 1)).collect(),
        StructureKind::Star => (1..n).map(|i| (0, i)).collect(),
        StructureKind::BinaryTree => {
            let mut edges = Vec::new();
            for i in 0..n {
                for child in [2 * i + 1, 2 * i + 2] {
                    if child < n {
                        edges.push((i, child));
                    }
                }
            }
            edges
        }
        StructureKind::Cycle => {
            if n < 3 {
                return Err(construction_error(kind, n, "a cycle needs at least 3 nodes"));
            }
            let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            edges.push((0, n - 1));
            edges
        }
        StructureKind::Ladder => {
            // Two rails of ceil(n/2) columns; node 2c+r sits at column c, rail r.
            // Odd n leaves the last column with a single node.
            let mut edges = Vec::new();
            for c in 0..n.div_ceil(2) {
                let top = 2 * c;
                let bottom = 2 * c + 1;
                if bottom < n {
                    edges.push((top, bottom));
                }
                for r in 0..2 {
                    let here = 2 * c + r;
                    let next = 2 * (c + 1) + r;
                    if here < n && next < n {
                        edges.push((here, next));
                    }
                }
            }
            edges
        }
        StructureKind::Grid => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n || side < 2 {
                return Err(construction_error(
                    kind,
                    n,
                    "square grid needs a square node count >= 4",
                ));
            }
            let mut edges = Vec::new();
            for r in 0..side {
                for c in 0..side {
                    let here = r * side + c;
                    if c + 1 < side {
                        edges.push((here, here + 1));
                    }
                    if r + 1 < side {
                        edges.push((here, here + side));
                    }
                }
            }
            edges
        }
        StructureKind::Barbell => {
            if n < 4 {
                return Err(construction_error(kind, n, "a barbell needs at least 4 nodes"));
            }
            // Two cliques; odd n puts a path node between them.
            let k = n / 2;
            let mut edges = Vec::new();
            let clique = |edges: &mut Vec<(usize, usize)>, lo: usize, hi: usize| {
                for i in lo..hi {
                    for j in (i + 1)..hi {
                        edges.push((i, j));
                    }
                }
            };
            if n.is_multiple_of(2) {
                clique(&mut edges, 0, k);
                clique(&mut edges, k, n);
                edges.push((k - 1, k));
            } else {
                clique(&mut edges, 0, k);
                clique(&mut edges, k + 1, n);
                edges.push((k - 1, k));
                edges.push((k, k + 1));
            }
            edges
        }
        StructureKind::Wheel => {
            if n < 4 {
                return Err(construction_error(kind, n, "a wheel needs at least 4 nodes"));
            }
            let mut edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
            for i in 1..n - 1 {
                edges.push((i, i + 1));
            }
            edges.push((1, n - 1));
            edges
        }
        StructureKind::FixedEr1
        | StructureKind::FixedEr2
        | StructureKind::FixedEr3
        | StructureKind::FixedEr4 => {
            // Frozen template: exactly round(q * n(n-1)/2) edges chosen by a
            // seed derived from (kind, n), rejected until connected.
            let q = kind.template_q().unwrap();
            let pairs = n * (n - 1) / 2;
            let m = ((q * pairs as f64).round() as usize).clamp(n - 1, pairs);
            let seed = rng::derive_seed(0x5f1c_ed09, kind.template_tag() * 1000 + n as u64);
            let mut rng = rng::seeded_rng(seed);
            return sample_gnm_connected(n, m, &mut rng, ER_RETRY_CAP);
        }
        StructureKind::Complete => {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    edges.push((i, j));
                }
            }
            edges
        }
    };
    let topology = GraphTopology::new(n, edges)?;
    debug_assert!(topology.is_connected());
    Ok(topology)
}

/// Sample a connected `G(n, q)` graph: every unordered pair is included
/// independently with probability `q`, rejecting disconnected draws.
pub fn sample_erdos_renyi_connected(
    n: usize,
    q: f64,
    rng: &mut impl Rng,
) -> Result<GraphTopology> {
    sample_erdos_renyi_connected_capped(n, q, rng, ER_RETRY_CAP)
}

/// As [`sample_erdos_renyi_connected`] with an explicit rejection cap.
pub fn sample_erdos_renyi_connected_capped(
    n: usize,
    q: f64,
    rng: &mut impl Rng,
    cap: usize,
) -> Result<GraphTopology> {
    if n < 2 {
        return Err(Error::Contract(format!("G(n,q) needs n >= 2, got {n}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Contract(format!("edge probability must be in (0, 1], got {q}")));
    }
    for _ in 0..cap {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < q {
                    edges.push((i, j));
                }
            }
        }
        let topology = GraphTopology::new(n, edges)?;
        if topology.is_connected() {
            return Ok(topology);
        }
    }
    Err(Error::RetryCapExceeded { n, q, cap })
}

/// Uniformly choose exactly `m` of the `n(n-1)/2` pairs, rejecting
/// disconnected draws.
fn sample_gnm_connected(
    n: usize,
    m: usize,
    rng: &mut impl Rng,
    cap: usize,
) -> Result<GraphTopology> {
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    if m < n - 1 || m > pairs.len() {
        return Err(Error::Contract(format!(
            "edge count {m} out of range for n={n}"
        )));
    }
    for _ in 0..cap {
        // Partial Fisher-Yates: the first m entries are a uniform subset.
        for k in 0..m {
            let pick = k + rng.random_range(0..pairs.len() - k);
            pairs.swap(k, pick);
        }
        let topology = GraphTopology::new(n, pairs[..m].to_vec())?;
        if topology.is_connected() {
            return Ok(topology);
        }
    }
    Err(Error::RetryCapExceeded {
        n,
        q: m as f64 / pairs.len() as f64,
        cap,
    })
}

/// Empirical edge frequencies over `count` uniform spanning trees, sampled
/// with Wilson's loop-erased random walk. Frequencies are clamped to at
/// least `1e-3` so downstream reweighting never divides by zero.
pub fn spanning_tree_edge_frequencies(
    topology: &GraphTopology,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if !topology.is_connected() {
        return Err(Error::InvalidTopology(
            "spanning tree sampling needs a connected graph".into(),
        ));
    }
    if count == 0 {
        return Err(Error::Contract("spanning tree sample count must be >= 1".into()));
    }
    let n = topology.n();
    let mut hits = vec![0u64; topology.edge_count()];
    let mut in_tree = vec![false; n];
    let mut next_hop: Vec<Option<(usize, usize)>> = vec![None; n];
    for _ in 0..count {
        in_tree.iter_mut().for_each(|x| *x = false);
        next_hop.iter_mut().for_each(|x| *x = None);
        in_tree[0] = true;
        for start in 1..n {
            if in_tree[start] {
                continue;
            }
            // Random walk from `start` until the tree is hit; `next_hop`
            // keeps only the last exit per node, which erases loops.
            let mut u = start;
            while !in_tree[u] {
                let nbrs = topology.neighbors(u);
                let pick = nbrs[rng.random_range(0..nbrs.len())];
                next_hop[u] = Some(pick);
                u = pick.0;
            }
            let mut u = start;
            while !in_tree[u] {
                in_tree[u] = true;
                let (v, edge_idx) = next_hop[u].unwrap();
                hits[edge_idx] += 1;
                u = v;
            }
        }
    }
    Ok(hits
        .iter()
        .map(|&h| (h as f64 / count as f64).max(1e-3))
        .collect())
}
