//! Inference in binary pairwise Markov random fields, three ways: exact
//! enumeration, classical message passing (sum-product, max-product, mean
//! field, tree-reweighted), and trained graph neural networks running on a
//! built-in reverse-mode tape.
//!
//! The crate also ships the model corpus generators, the supervised
//! training loop, and the evaluation harness that scores every method
//! against enumeration ground truth.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod infer;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod tape;
pub mod train;

pub use dataset::{
    generate_dataset, load_dataset, save_dataset, Dataset, DatasetSpec, GroundTruth,
    LabeledModel, ModelFile,
};
pub use error::{Error, Result};
pub use eval::{
    emit_report, emit_trace, eval_map, eval_marginals, eval_models, kl_per_node,
    models_fingerprint, run_condition,
    trace_convergence, Cell, Condition, ConditionId, EvalContext, Method, MetricsReport,
    ReportRow, TraceReport,
};
pub use gnn::{
    build_gnn_graph, convergence_trace, forward, gnn_marginals, init_weights, ForwardPass,
    GnnArchitecture, GnnGraph, GnnKind, GnnWeights, WeightsFile,
};
pub use graph::{
    build_topology, sample_erdos_renyi_connected, GraphTopology, StructureKind,
    CLASSIC_STRUCTURES,
};
pub use infer::{
    bp_max_product, bp_sum_product, edge_appearance_probs, mean_field, trbp, BaselineResult,
    FixedPointConfig, MessageSet, RhoMethod,
};
pub use model::{sample_mrf, BinaryMrf};
pub use nn::ParamStore;
pub use oracle::{enumerate, unnormalized_log_prob, OracleResult};
pub use tape::{Tape, Tensor, ValueId};
pub use train::{
    cross_entropy_loss, targets_for, train, CheckpointFile, Task, TrainConfig, TrainHistory,
};
