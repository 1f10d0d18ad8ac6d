//! Trainable message-passing networks over MRFs, in two graph mappings.
//!
//! The variable mapping (`NodeGnn`) keeps one hidden state per MRF
//! variable and puts the model parameters on directed edge features. The
//! message mapping (`MsgGnn`) keeps one hidden state per directed BP
//! message `(i -> j)` and wires `(k -> i)` into `(i -> j)` for `k != j`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BinaryMrf;
use crate::nn::{GruCell, Mlp, ParamStore};
use crate::rng;
use crate::tape::{Tape, Tensor, ValueId};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GnnKind {
    NodeGnn,
    MsgGnn,
}

impl std::fmt::Display for GnnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GnnKind::NodeGnn => "node-gnn",
            GnnKind::MsgGnn => "msg-gnn",
        })
    }
}

/// What goes into the per-edge feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFeatureMode {
    /// `(J_ij, b_i, b_j)` ordered source-first.
    CouplingAndBiases,
    /// `(J_ij)` only.
    CouplingOnly,
}

impl EdgeFeatureMode {
    pub fn dim(&self) -> usize {
        match self {
            EdgeFeatureMode::CouplingAndBiases => 3,
            EdgeFeatureMode::CouplingOnly => 1,
        }
    }
}

/// Network hyperparameters shared by both mappings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnArchitecture {
    pub kind: GnnKind,
    /// Hidden state dimension D.
    pub hidden_dim: usize,
    /// Message dimension P.
    pub message_dim: usize,
    /// Propagation steps T.
    pub t_steps: usize,
    /// Hidden widths of the message and readout nets.
    pub mlp_hidden: Vec<usize>,
    pub feature_mode: EdgeFeatureMode,
}

impl GnnArchitecture {
    pub fn new(kind: GnnKind) -> Self {
        Self {
            kind,
            hidden_dim: 5,
            message_dim: 5,
            t_steps: 10,
            mlp_hidden: vec![64, 64],
            feature_mode: EdgeFeatureMode::CouplingAndBiases,
        }
    }

    pub fn node() -> Self {
        Self::new(GnnKind::NodeGnn)
    }

    pub fn msg() -> Self {
        Self::new(GnnKind::MsgGnn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.message_dim == 0 || self.t_steps == 0 {
            return Err(Error::Contract("gnn dimensions and steps must be >= 1".into()));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::Contract("mlp widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Input width of the message net: both endpoint states plus the edge
    /// feature for the variable mapping, the summed source state plus the
    /// feature for the message mapping.
    pub fn message_input_dim(&self) -> usize {
        let eps = self.feature_mode.dim();
        match self.kind {
            GnnKind::NodeGnn => 2 * self.hidden_dim + eps,
            GnnKind::MsgGnn => self.hidden_dim + eps,
        }
    }

    fn message_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.message_input_dim()];
        dims.extend_from_slice(&self.mlp_hidden);
        dims.push(self.message_dim);
        dims
    }

    fn readout_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.hidden_dim];
        dims.extend_from_slice(&self.mlp_hidden);
        dims.push(1);
        dims
    }
}

/// Learned parameters: message net, recurrent update, readout net. The
/// functions are canonical -- shared across all nodes and edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnWeights {
    pub arch: GnnArchitecture,
    pub store: ParamStore,
    message_net: Mlp,
    update_cell: GruCell,
    readout_net: Mlp,
}

/// Fresh Glorot-initialized weights; biases zero; deterministic per seed.
pub fn init_weights(arch: &GnnArchitecture, rng: &mut impl Rng) -> Result<GnnWeights> {
    arch.validate()?;
    let mut store = ParamStore::new();
    let message_net = Mlp::init(&mut store, "msg", &arch.message_dims(), rng)?;
    let update_cell = GruCell::init(&mut store, "gru", arch.hidden_dim, arch.message_dim, rng)?;
    let readout_net = Mlp::init(&mut store, "out", &arch.readout_dims(), rng)?;
    Ok(GnnWeights {
        arch: arch.clone(),
        store,
        message_net,
        update_cell,
        readout_net,
    })
}

impl GnnWeights {
    /// Rebuild the layer handles for an architecture and a bare store,
    /// checking that every expected parameter is present with its shape.
    pub fn from_store(arch: GnnArchitecture, store: ParamStore) -> Result<Self> {
        arch.validate()?;
        let reference = init_weights(&arch, &mut rng::seeded_rng(0))?;
        if reference.store.len() != store.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} parameters, found {}",
                reference.store.len(),
                store.len()
            )));
        }
        for name in reference.store.names() {
            let expected = reference.store.get(name).unwrap().shape();
            let got = store
                .get(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing parameter {name:?}")))?
                .shape();
            if expected != got {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter {name:?} has shape {got:?}, expected {expected:?}"
                )));
            }
        }
        Ok(GnnWeights {
            store,
            ..reference
        })
    }

    /// Stable fingerprint of architecture and parameter values.
    pub fn fingerprint(&self) -> u64 {
        let file = WeightsFile::from_weights(self);
        let bytes = serde_json::to_vec(&file).expect("weights serialize");
        fnv1a(&bytes)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Serialized weights: architecture metadata plus named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub format_version: u32,
    pub arch: GnnArchitecture,
    pub params: BTreeMap<String, Tensor>,
}

impl WeightsFile {
    pub fn from_weights(weights: &GnnWeights) -> Self {
        Self {
            format_version: WEIGHTS_FORMAT_VERSION,
            arch: weights.arch.clone(),
            params: weights.store.to_named_tensors(),
        }
    }

    pub fn into_weights(self) -> Result<GnnWeights> {
        GnnWeights::from_store(self.arch, ParamStore::from_named_tensors(self.params)?)
    }
}

/// A directed edge of the variable mapping, with its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnEdge {
    pub src: usize,
    pub dst: usize,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GnnGraphDetail {
    /// Variable mapping: directed feature edges between variable nodes.
    Node { edges: Vec<GnnEdge> },
    /// Message mapping: per-node source lists and node features.
    Msg {
        sources: Vec<Vec<usize>>,
        features: Vec<Vec<f64>>,
    },
}

/// The network-side graph built from one MRF.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGraph {
    pub kind: GnnKind,
    pub n_vars: usize,
    pub n_nodes: usize,
    pub detail: GnnGraphDetail,
    /// Which network nodes sum into each variable's readout.
    pub readout_groups: Vec<Vec<usize>>,
}

fn edge_feature(mode: EdgeFeatureMode, coupling: f64, b_src: f64, b_dst: f64) -> Vec<f64> {
    match mode {
        EdgeFeatureMode::CouplingAndBiases => vec![coupling, b_src, b_dst],
        EdgeFeatureMode::CouplingOnly => vec![coupling],
    }
}

pub fn build_gnn_graph(mrf: &BinaryMrf, kind: GnnKind) -> GnnGraph {
    build_gnn_graph_with(mrf, kind, EdgeFeatureMode::CouplingAndBiases)
}

pub fn build_gnn_graph_with(mrf: &BinaryMrf, kind: GnnKind, mode: EdgeFeatureMode) -> GnnGraph {
    let n = mrf.n();
    let topology = mrf.topology();
    match kind {
        GnnKind::NodeGnn => {
            // One network node per variable; each MRF edge becomes two
            // directed feature edges with source-first bias order.
            let mut edges = Vec::with_capacity(2 * topology.edge_count());
            for (idx, &(i, j)) in topology.edges().iter().enumerate() {
                let coupling = mrf.coupling(idx);
                edges.push(GnnEdge {
                    src: i,
                    dst: j,
                    feature: edge_feature(mode, coupling, mrf.bias(i), mrf.bias(j)),
                });
                edges.push(GnnEdge {
                    src: j,
                    dst: i,
                    feature: edge_feature(mode, coupling, mrf.bias(j), mrf.bias(i)),
                });
            }
            GnnGraph {
                kind,
                n_vars: n,
                n_nodes: n,
                detail: GnnGraphDetail::Node { edges },
                readout_groups: (0..n).map(|i| vec![i]).collect(),
            }
        }
        GnnKind::MsgGnn => {
            // One network node per directed message (i -> j), laid out as
            // 2 * edge_idx + (0 for low->high, 1 for high->low).
            let n_nodes = 2 * topology.edge_count();
            let directed = |edge_idx: usize, from: usize, to: usize| {
                2 * edge_idx + usize::from(from > to)
            };
            let mut sources = vec![Vec::new(); n_nodes];
            let mut features = vec![Vec::new(); n_nodes];
            for (idx, &(a, b)) in topology.edges().iter().enumerate() {
                let coupling = mrf.coupling(idx);
                for (i, j) in [(a, b), (b, a)] {
                    let node = directed(idx, i, j);
                    features[node] = edge_feature(mode, coupling, mrf.bias(i), mrf.bias(j));
                    // (k -> i) feeds (i -> j) for every neighbor k of i but j.
                    for &(k, ke) in topology.neighbors(i) {
                        if k != j {
                            sources[node].push(directed(ke, k, i));
                        }
                    }
                }
            }
            let readout_groups = (0..n)
                .map(|i| {
                    topology
                        .neighbors(i)
                        .iter()
                        .map(|&(j, e)| directed(e, j, i))
                        .collect()
                })
                .collect();
            GnnGraph {
                kind,
                n_vars: n,
                n_nodes,
                detail: GnnGraphDetail::Msg { sources, features },
                readout_groups,
            }
        }
    }
}

/// One taped forward pass: prediction handles (still differentiable),
/// their values, and the per-step state movement for diagnostics.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Per-variable `p(x_i = +1)` on the tape.
    pub pred_ids: Vec<ValueId>,
    /// The same predictions as plain numbers.
    pub marginals_p1: Vec<f64>,
    /// `state_deltas[t-1][v] = || h_v^t - h_v^{t-1} ||_2` for t in 1..=T.
    pub state_deltas: Vec<Vec<f64>>,
}

/// Run `t_steps` synchronous rounds from all-zero states, then read out
/// through the readout net and a final sigmoid.
pub fn forward(
    graph: &GnnGraph,
    weights: &GnnWeights,
    t_steps: usize,
    tape: &mut Tape,
) -> Result<ForwardPass> {
    let arch = &weights.arch;
    if graph.kind != arch.kind {
        return Err(Error::CheckpointMismatch(format!(
            "graph built for {}, weights are {}",
            graph.kind, arch.kind
        )));
    }
    if let GnnGraphDetail::Node { edges } = &graph.detail {
        if let Some(e) = edges.first() {
            if e.feature.len() != arch.feature_mode.dim() {
                return Err(Error::CheckpointMismatch(format!(
                    "edge features have {} entries, architecture expects {}",
                    e.feature.len(),
                    arch.feature_mode.dim()
                )));
            }
        }
    }
    let message_net = weights.message_net.bind(tape, &weights.store)?;
    let update_cell = weights.update_cell.bind(tape, &weights.store)?;
    let readout_net = weights.readout_net.bind(tape, &weights.store)?;

    let zero_state = tape.leaf(Tensor::zeros(arch.hidden_dim, 1));
    let zero_message = tape.leaf(Tensor::zeros(arch.message_dim, 1));
    let mut states: Vec<ValueId> = vec![zero_state; graph.n_nodes];
    let mut feature_leaves: Vec<ValueId> = Vec::new();
    match &graph.detail {
        GnnGraphDetail::Node { edges } => {
            for e in edges {
                feature_leaves.push(tape.leaf(Tensor::vector(e.feature.clone())));
            }
        }
        GnnGraphDetail::Msg { features, .. } => {
            for f in features {
                feature_leaves.push(tape.leaf(Tensor::vector(f.clone())));
            }
        }
    }

    let mut state_deltas = Vec::with_capacity(t_steps);
    for _ in 0..t_steps {
        let mut next = Vec::with_capacity(graph.n_nodes);
        match &graph.detail {
            GnnGraphDetail::Node { edges } => {
                let mut incoming: Vec<Vec<ValueId>> = vec![Vec::new(); graph.n_nodes];
                for (e_idx, e) in edges.iter().enumerate() {
                    let input = tape.concat(&[states[e.src], states[e.dst], feature_leaves[e_idx]])?;
                    let message = message_net.forward(tape, input)?;
                    incoming[e.dst].push(message);
                }
                for v in 0..graph.n_nodes {
                    let aggregated = if incoming[v].is_empty() {
                        zero_message
                    } else {
                        tape.sum_all(&incoming[v])?
                    };
                    next.push(update_cell.step(tape, states[v], aggregated)?);
                }
            }
            GnnGraphDetail::Msg { sources, .. } => {
                for v in 0..graph.n_nodes {
                    let pooled = if sources[v].is_empty() {
                        zero_state
                    } else {
                        let inputs: Vec<ValueId> =
                            sources[v].iter().map(|&s| states[s]).collect();
                        tape.sum_all(&inputs)?
                    };
                    let input = tape.concat(&[pooled, feature_leaves[v]])?;
                    let message = message_net.forward(tape, input)?;
                    next.push(update_cell.step(tape, states[v], message)?);
                }
            }
        }
        let deltas = next
            .iter()
            .zip(&states)
            .map(|(&new, &old)| {
                let a = tape.value(new).data();
                let b = tape.value(old).data();
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        state_deltas.push(deltas);
        states = next;
    }

    let mut pred_ids = Vec::with_capacity(graph.n_vars);
    let mut marginals_p1 = Vec::with_capacity(graph.n_vars);
    for group in &graph.readout_groups {
        let pooled = if group.is_empty() {
            zero_state
        } else {
            let members: Vec<ValueId> = group.iter().map(|&v| states[v]).collect();
            tape.sum_all(&members)?
        };
        let logit = readout_net.forward(tape, pooled)?;
        let p = tape.sigmoid(logit);
        marginals_p1.push(tape.value(p).item());
        pred_ids.push(p);
    }
    Ok(ForwardPass {
        pred_ids,
        marginals_p1,
        state_deltas,
    })
}

/// Per-step mean and standard deviation of the state movement, over all
/// network nodes.
pub fn convergence_trace(pass: &ForwardPass) -> Vec<(f64, f64)> {
    pass.state_deltas
        .iter()
        .map(|step| {
            let n = step.len().max(1) as f64;
            let mean = step.iter().sum::<f64>() / n;
            let var = step.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// Convenience: marginal estimates on a scratch tape.
pub fn gnn_marginals(weights: &GnnWeights, mrf: &BinaryMrf) -> Result<Vec<f64>> {
    let graph = build_gnn_graph_with(mrf, weights.arch.kind, weights.arch.feature_mode);
    let mut tape = Tape::new();
    Ok(forward(&graph, weights, weights.arch.t_steps, &mut tape)?.marginals_p1)
}

/// Decode a state from marginal estimates: `+1` wherever `p >= 1/2`.
pub fn decode_state(marginals_p1: &[f64]) -> Vec<i8> {
    marginals_p1.iter().map(|&p| if p >= 0.5 { 1 } else { -1 }).collect()
}
