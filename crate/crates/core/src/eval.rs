//! The four-condition generalization protocol: generate labeled model
//! sets per cell, run every method, aggregate KL and MAP accuracy, and
//! emit machine-readable reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{labeled_model, LabeledModel};
use crate::error::{Error, Result};
use crate::gnn::{
    build_gnn_graph_with, decode_state, fnv1a, forward, gnn_marginals,
    GnnKind, GnnWeights,
};
use crate::graph::{build_topology, sample_erdos_renyi_connected, StructureKind, CLASSIC_STRUCTURES};
use crate::infer::{
    bp_max_product, bp_sum_product, edge_appearance_probs, mean_field, trbp, FixedPointConfig,
    RhoMethod,
};
use crate::model::sample_mrf;
use crate::rng;
use crate::tape::Tape;
use crate::train::Task;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Estimates below this floor (or above one minus it) are clamped before
/// any KL evaluation.
pub const PREDICTION_CLAMP: f64 = 1e-7;

/// Clamp an estimate into `[PREDICTION_CLAMP, 1 - PREDICTION_CLAMP]`.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP)
}

/// `KL(p || p_hat)` between two Bernoulli distributions given their `+1`
/// probabilities. The estimate must already be clamped away from 0 and 1.
pub fn kl_per_node(p: f64, p_hat: f64) -> f64 {
    p * (p / p_hat).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - p_hat)).ln()
}

/// The experimental grid: structured templates or random-graph sweeps at
/// two sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    I,
    II,
    III,
    IV,
}

impl ConditionId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "I" | "i" | "1" => Some(Self::I),
            "II" | "ii" | "2" => Some(Self::II),
            "III" | "iii" | "3" => Some(Self::III),
            "IV" | "iv" | "4" => Some(Self::IV),
            _ => None,
        }
    }
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::IV => "IV",
        })
    }
}

/// One column of a condition: a fixed structure or an edge probability.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Structure(StructureKind),
    EdgeProb(f64),
}

impl Cell {
    pub fn name(&self) -> String {
        match self {
            Cell::Structure(kind) => kind.to_string(),
            Cell::EdgeProb(q) => format!("q={q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub id: ConditionId,
    pub n: usize,
    pub cells: Vec<Cell>,
    pub models_per_cell: usize,
}

impl Condition {
    /// The standard grid: I and II run the 13 structures at n = 9 and 16;
    /// III and IV sweep q in {0.1, ..., 0.9} at n = 9 and 16.
    pub fn standard(id: ConditionId, models_per_cell: usize) -> Self {
        let (n, cells) = match id {
            ConditionId::I => (9, structured_cells()),
            ConditionId::II => (16, structured_cells()),
            ConditionId::III => (9, sweep_cells()),
            ConditionId::IV => (16, sweep_cells()),
        };
        Self {
            id,
            n,
            cells,
            models_per_cell,
        }
    }

    /// Same id and size, restricted to chosen cells.
    pub fn with_cells(id: ConditionId, models_per_cell: usize, cells: Vec<Cell>) -> Self {
        let n = match id {
            ConditionId::I | ConditionId::III => 9,
            ConditionId::II | ConditionId::IV => 16,
        };
        Self {
            id,
            n,
            cells,
            models_per_cell,
        }
    }

    /// The labeled models of one cell, derived from `(seed, cell, index)`.
    pub fn cell_models(&self, cell_idx: usize, seed: u64) -> Result<Vec<LabeledModel>> {
        let cell = &self.cells[cell_idx];
        let cell_seed = rng::derive_seed(seed, cell_idx as u64);
        match cell {
            Cell::Structure(kind) => {
                let topology = build_topology(*kind, self.n)?;
                let name = kind.to_string();
                (0..self.models_per_cell)
                    .map(|i| labeled_model(&topology, &name, cell_seed, i as u64))
                    .collect()
            }
            Cell::EdgeProb(q) => (0..self.models_per_cell)
                .map(|i| {
                    let mut rng = rng::sub_rng(cell_seed, i as u64);
                    let topology = sample_erdos_renyi_connected(self.n, *q, &mut rng)?;
                    let mrf = sample_mrf(&topology, &mut rng);
                    let oracle = crate::oracle::enumerate(&mrf)?;
                    Ok(LabeledModel {
                        mrf,
                        truth: crate::dataset::GroundTruth {
                            marginals_p1: oracle.marginals_p1,
                            map_state: oracle.map_state,
                        },
                        structure: cell.name(),
                    })
                })
                .collect(),
        }
    }
}

fn structured_cells() -> Vec<Cell> {
    CLASSIC_STRUCTURES.iter().map(|&k| Cell::Structure(k)).collect()
}

fn sweep_cells() -> Vec<Cell> {
    (1..=9).map(|i| Cell::EdgeProb(i as f64 / 10.0)).collect()
}

/// The inference methods the harness can score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Oracle,
    MeanField,
    Bp,
    MaxProduct,
    Trbp,
    NodeGnn,
    MsgGnn,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::MeanField => "mf",
            Method::Bp => "bp",
            Method::MaxProduct => "max-product",
            Method::Trbp => "trbp",
            Method::NodeGnn => "node-gnn",
            Method::MsgGnn => "msg-gnn",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Some(match s {
            "oracle" => Method::Oracle,
            "mf" | "mean-field" => Method::MeanField,
            "bp" | "sum-product" => Method::Bp,
            "max-product" | "maxprod" => Method::MaxProduct,
            "trbp" => Method::Trbp,
            "node-gnn" | "node" => Method::NodeGnn,
            "msg-gnn" | "msg" => Method::MsgGnn,
            _ => return None,
        })
    }
}

/// Checkpoints and fixed-point settings shared by a harness run.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalContext<'a> {
    pub node_gnn: Option<&'a GnnWeights>,
    pub msg_gnn: Option<&'a GnnWeights>,
    pub fixed_point: Option<FixedPointConfig>,
}

impl<'a> EvalContext<'a> {
    fn fp(&self) -> FixedPointConfig {
        self.fixed_point.unwrap_or_default()
    }

    fn gnn(&self, method: Method) -> Result<&'a GnnWeights> {
        let (slot, kind) = match method {
            Method::NodeGnn => (self.node_gnn, GnnKind::NodeGnn),
            Method::MsgGnn => (self.msg_gnn, GnnKind::MsgGnn),
            _ => unreachable!(),
        };
        let weights =
            slot.ok_or_else(|| Error::CheckpointMismatch(format!("no checkpoint for {kind}")))?;
        if weights.arch.kind != kind {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint is {}, expected {kind}",
                weights.arch.kind
            )));
        }
        Ok(weights)
    }
}

/// Marginal estimates plus a convergence flag.
fn estimate_marginals(
    method: Method,
    model: &LabeledModel,
    ctx: &EvalContext<'_>,
) -> Result<(Vec<f64>, bool)> {
    match method {
        Method::Oracle => Ok((model.truth.marginals_p1.clone(), true)),
        Method::MeanField => {
            let r = mean_field(&model.mrf, &ctx.fp())?;
            Ok((r.marginals_p1, r.converged))
        }
        Method::Bp => {
            let r = bp_sum_product(&model.mrf, &ctx.fp())?;
            Ok((r.marginals_p1, r.converged))
        }
        Method::MaxProduct => Err(Error::Contract(
            "max-product estimates states, not marginals".into(),
        )),
        Method::Trbp => {
            let rho = edge_appearance_probs(
                model.mrf.topology(),
                RhoMethod::Uniform,
                &mut rng::seeded_rng(0),
            )?;
            let r = trbp(&model.mrf, &rho, &ctx.fp())?;
            Ok((r.marginals_p1, r.converged))
        }
        Method::NodeGnn | Method::MsgGnn => {
            let weights = ctx.gnn(method)?;
            Ok((gnn_marginals(weights, &model.mrf)?, true))
        }
    }
}

/// State estimates for the MAP task.
fn estimate_map(
    method: Method,
    model: &LabeledModel,
    ctx: &EvalContext<'_>,
) -> Result<(Vec<i8>, bool)> {
    match method {
        Method::Oracle => Ok((model.truth.map_state.clone(), true)),
        Method::MaxProduct => {
            let r = bp_max_product(&model.mrf, &ctx.fp())?;
            Ok((r.map_state.expect("max-product decodes"), r.converged))
        }
        Method::MeanField => {
            let r = mean_field(&model.mrf, &ctx.fp())?;
            Ok((r.map_state.expect("mean field decodes"), r.converged))
        }
        Method::Bp => {
            let r = bp_sum_product(&model.mrf, &ctx.fp())?;
            Ok((decode_state(&r.marginals_p1), r.converged))
        }
        Method::Trbp => {
            let (marginals, converged) = estimate_marginals(method, model, ctx)?;
            Ok((decode_state(&marginals), converged))
        }
        Method::NodeGnn | Method::MsgGnn => {
            let weights = ctx.gnn(method)?;
            Ok((decode_state(&gnn_marginals(weights, &model.mrf)?), true))
        }
    }
}

/// Aggregates for one (cell, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub cell: String,
    pub method: String,
    pub mean_kl: Option<f64>,
    pub std_kl: Option<f64>,
    pub map_var_acc: Option<f64>,
    pub map_state_acc: Option<f64>,
    pub n_models: usize,
    pub n_failures: usize,
    pub n_unconverged: usize,
}

/// Mean KL over nodes, then mean and population std over models.
pub fn eval_marginals(
    method: Method,
    models: &[LabeledModel],
    ctx: &EvalContext<'_>,
) -> Result<ReportRow> {
    let mut per_model = Vec::with_capacity(models.len());
    let mut n_failures = 0usize;
    let mut n_unconverged = 0usize;
    for model in models {
        match estimate_marginals(method, model, ctx) {
            Ok((estimate, converged)) => {
                if !converged {
                    n_unconverged += 1;
                }
                let kl = model
                    .truth
                    .marginals_p1
                    .iter()
                    .zip(&estimate)
                    .map(|(&p, &p_hat)| kl_per_node(p, clamp_prob(p_hat)))
                    .sum::<f64>()
                    / model.mrf.n() as f64;
                per_model.push(kl);
            }
            Err(e @ (Error::Contract(_) | Error::CheckpointMismatch(_))) => return Err(e),
            Err(_) => n_failures += 1,
        }
    }
    let (mean, std) = mean_std(&per_model);
    Ok(ReportRow {
        condition: String::new(),
        cell: String::new(),
        method: method.name().into(),
        mean_kl: Some(mean),
        std_kl: Some(std),
        map_var_acc: None,
        map_state_acc: None,
        n_models: models.len(),
        n_failures,
        n_unconverged,
    })
}

/// Per-variable and whole-state accuracy against the exact MAP.
pub fn eval_map(
    method: Method,
    models: &[LabeledModel],
    ctx: &EvalContext<'_>,
) -> Result<ReportRow> {
    let mut var_acc = Vec::with_capacity(models.len());
    let mut exact = 0usize;
    let mut n_failures = 0usize;
    let mut n_unconverged = 0usize;
    for model in models {
        match estimate_map(method, model, ctx) {
            Ok((state, converged)) => {
                if !converged {
                    n_unconverged += 1;
                }
                let hits = state
                    .iter()
                    .zip(&model.truth.map_state)
                    .filter(|(a, b)| a == b)
                    .count();
                var_acc.push(hits as f64 / model.mrf.n() as f64);
                if hits == model.mrf.n() {
                    exact += 1;
                }
            }
            Err(e @ (Error::Contract(_) | Error::CheckpointMismatch(_))) => return Err(e),
            Err(_) => n_failures += 1,
        }
    }
    let (mean, _) = mean_std(&var_acc);
    let scored = var_acc.len().max(1);
    Ok(ReportRow {
        condition: String::new(),
        cell: String::new(),
        method: method.name().into(),
        mean_kl: None,
        std_kl: None,
        map_var_acc: Some(mean),
        map_state_acc: Some(exact as f64 / scored as f64),
        n_models: models.len(),
        n_failures,
        n_unconverged,
    })
}

/// Task-dispatched evaluation over an explicit model set.
pub fn eval_models(
    method: Method,
    models: &[LabeledModel],
    task: Task,
    ctx: &EvalContext<'_>,
) -> Result<ReportRow> {
    match task {
        Task::Marginals => eval_marginals(method, models, ctx),
        Task::Map => eval_map(method, models, ctx),
    }
}

/// Stable fingerprint of a model set, for run manifests.
pub fn models_fingerprint(models: &[LabeledModel]) -> String {
    let mut bytes = Vec::new();
    for model in models {
        let file = crate::dataset::ModelFile::from_model(model);
        bytes.extend_from_slice(&serde_json::to_vec(&file).expect("model serializes"));
    }
    format!("{:016x}", fnv1a(&bytes))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Provenance attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub condition: String,
    pub task: String,
    pub n: usize,
    pub models_per_cell: usize,
    pub prediction_clamp: f64,
    pub corpus_hash: String,
    pub checkpoints: BTreeMap<String, String>,
    pub max_iters: usize,
    pub tolerance: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub manifest: RunManifest,
    pub rows: Vec<ReportRow>,
}

fn corpus_hash(cells: &[Vec<LabeledModel>]) -> String {
    let all: Vec<LabeledModel> = cells.iter().flatten().cloned().collect();
    models_fingerprint(&all)
}

/// Run every method over every cell of the condition. Conditions II-IV
/// reuse the frozen checkpoints passed in the context.
pub fn run_condition(
    cond: &Condition,
    methods: &[Method],
    task: Task,
    ctx: &EvalContext<'_>,
    seed: u64,
) -> Result<MetricsReport> {
    let mut cells = Vec::with_capacity(cond.cells.len());
    for idx in 0..cond.cells.len() {
        cells.push(cond.cell_models(idx, seed)?);
    }
    let mut rows = Vec::new();
    for (idx, cell) in cond.cells.iter().enumerate() {
        for &method in methods {
            let mut row = match task {
                Task::Marginals => eval_marginals(method, &cells[idx], ctx)?,
                Task::Map => eval_map(method, &cells[idx], ctx)?,
            };
            row.condition = cond.id.to_string();
            row.cell = cell.name();
            rows.push(row);
        }
    }
    let mut checkpoints = BTreeMap::new();
    if let Some(w) = ctx.node_gnn {
        checkpoints.insert("node-gnn".into(), format!("{:016x}", w.fingerprint()));
    }
    if let Some(w) = ctx.msg_gnn {
        checkpoints.insert("msg-gnn".into(), format!("{:016x}", w.fingerprint()));
    }
    let fp = ctx.fp();
    Ok(MetricsReport {
        format_version: REPORT_FORMAT_VERSION,
        manifest: RunManifest {
            seed,
            condition: cond.id.to_string(),
            task: task.to_string(),
            n: cond.n,
            models_per_cell: cond.models_per_cell,
            prediction_clamp: PREDICTION_CLAMP,
            corpus_hash: corpus_hash(&cells),
            checkpoints,
            max_iters: fp.max_iters,
            tolerance: fp.tolerance,
            damping: fp.damping,
        },
        rows,
    })
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write the CSV (fixed column order) and its JSON mirror; both are byte
/// stable for identical inputs. Returns the two paths.
pub fn emit_report(report: &MetricsReport, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let mut csv = String::from(
        "condition,cell,method,mean_kl,std_kl,map_var_acc,map_state_acc,n_models,n_failures\n",
    );
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.condition,
            row.cell,
            row.method,
            format_opt(row.mean_kl),
            format_opt(row.std_kl),
            format_opt(row.map_var_acc),
            format_opt(row.map_state_acc),
            row.n_models,
            row.n_failures
        ));
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, csv)?;
    fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    Ok((csv_path, json_path))
}

/// Per-step aggregate of the state movement over all nodes of all models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStat {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and std of `|| h^t - h^{t-1} ||` per step, pooled over every
/// network node of every model. Only successive post-update pairs are
/// reported, so the stats run from `t = 2` and `t_max <= 1` is empty.
pub fn trace_convergence(
    weights: &GnnWeights,
    models: &[LabeledModel],
    t_max: usize,
) -> Result<Vec<TraceStat>> {
    if t_max <= 1 {
        return Ok(Vec::new());
    }
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); t_max - 1];
    for model in models {
        let graph = build_gnn_graph_with(&model.mrf, weights.arch.kind, weights.arch.feature_mode);
        let mut tape = Tape::new();
        let pass = forward(&graph, weights, t_max, &mut tape)?;
        for (t, step) in pass.state_deltas.iter().enumerate().skip(1) {
            pooled[t - 1].extend_from_slice(step);
        }
    }
    Ok(pooled
        .iter()
        .enumerate()
        .map(|(t, deltas)| {
            let (mean, std) = mean_std(deltas);
            TraceStat { t: t + 2, mean, std }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub format_version: u32,
    pub condition: String,
    pub checkpoint: String,
    pub t_max: usize,
    pub stats: Vec<TraceStat>,
}

pub fn emit_trace(report: &TraceReport, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let mut csv = String::from("condition,t,mean_delta,std_delta\n");
    for s in &report.stats {
        csv.push_str(&format!("{},{},{},{}\n", report.condition, s.t, s.mean, s.std));
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, csv)?;
    fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{init_weights, GnnArchitecture};
    use crate::rng::seeded_rng;

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        assert_eq!(kl_per_node(0.3, 0.3), 0.0);
    }

    #[test]
    fn kl_closed_form_example() {
        let v = kl_per_node(0.5, 0.75);
        let expected = 0.5 * (2.0f64 / 3.0).ln() + 0.5 * 2.0f64.ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn kl_is_nonnegative_over_many_pairs() {
        let mut rng = seeded_rng(0);
        use rand::Rng;
        for _ in 0..100_000 {
            let p: f64 = rng.random_range(0.001..0.999);
            let q: f64 = clamp_prob(rng.random());
            assert!(kl_per_node(p, q) >= 0.0);
        }
    }

    #[test]
    fn clamp_is_idempotent_and_bounded() {
        assert_eq!(clamp_prob(0.0), PREDICTION_CLAMP);
        assert_eq!(clamp_prob(1.0), 1.0 - PREDICTION_CLAMP);
        assert_eq!(clamp_prob(0.4), 0.4);
        // Largest possible KL under the clamp.
        let max_kl = kl_per_node(1.0 - 1e-12, PREDICTION_CLAMP);
        assert!(max_kl < (1.0 / PREDICTION_CLAMP).ln() + 1e-6);
    }

    #[test]
    fn oracle_rows_are_perfect() {
        let cond = Condition::with_cells(
            ConditionId::I,
            4,
            vec![Cell::Structure(StructureKind::Chain), Cell::Structure(StructureKind::Grid)],
        );
        let ctx = EvalContext::default();
        let marginal = run_condition(&cond, &[Method::Oracle], Task::Marginals, &ctx, 5).unwrap();
        for row in &marginal.rows {
            assert_eq!(row.mean_kl, Some(0.0));
            assert_eq!(row.n_failures, 0);
        }
        let map = run_condition(&cond, &[Method::Oracle], Task::Map, &ctx, 5).unwrap();
        for row in &map.rows {
            assert_eq!(row.map_var_acc, Some(1.0));
            assert_eq!(row.map_state_acc, Some(1.0));
        }
    }

    #[test]
    fn bp_is_exact_on_tree_cells() {
        let cond = Condition::with_cells(
            ConditionId::I,
            5,
            vec![
                Cell::Structure(StructureKind::Chain),
                Cell::Structure(StructureKind::Star),
                Cell::Structure(StructureKind::BinaryTree),
            ],
        );
        let report =
            run_condition(&cond, &[Method::Bp], Task::Marginals, &EvalContext::default(), 9)
                .unwrap();
        for row in &report.rows {
            assert!(row.mean_kl.unwrap() < 1e-8, "{row:?}");
            assert_eq!(row.n_unconverged, 0);
        }
    }

    #[test]
    fn condition_three_has_nine_cells() {
        let cond = Condition::standard(ConditionId::III, 2);
        assert_eq!(cond.cells.len(), 9);
        assert_eq!(cond.n, 9);
        let names: Vec<String> = cond.cells.iter().map(|c| c.name()).collect();
        assert_eq!(names[0], "q=0.1");
        assert_eq!(names[8], "q=0.9");
    }

    #[test]
    fn condition_two_uses_sixteen_node_templates() {
        let cond = Condition::standard(ConditionId::II, 1);
        assert_eq!(cond.n, 16);
        assert_eq!(cond.cells.len(), 13);
        let models = cond.cell_models(0, 3).unwrap();
        assert_eq!(models[0].mrf.n(), 16);
        assert_eq!(models[0].structure, "chain");
    }

    #[test]
    fn random_coin_has_half_per_variable_accuracy() {
        use rand::Rng;
        let cond = Condition::with_cells(
            ConditionId::I,
            60,
            vec![Cell::Structure(StructureKind::Grid)],
        );
        let models = cond.cell_models(0, 33).unwrap();
        let mut rng = seeded_rng(4);
        let mut hits = 0usize;
        let mut total = 0usize;
        for model in &models {
            for &truth in &model.truth.map_state {
                let guess: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
                hits += usize::from(guess == truth);
                total += 1;
            }
        }
        let acc = hits as f64 / total as f64;
        assert!((acc - 0.5).abs() < 0.06, "coin accuracy {acc}");
    }

    #[test]
    fn report_emission_is_byte_stable_and_roundtrips() {
        let cond = Condition::with_cells(
            ConditionId::I,
            2,
            vec![Cell::Structure(StructureKind::Cycle)],
        );
        let ctx = EvalContext::default();
        let report =
            run_condition(&cond, &[Method::Oracle, Method::Bp], Task::Marginals, &ctx, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv_a, json_a) = emit_report(&report, dir.path(), "report").unwrap();
        let bytes_a = fs::read(&csv_a).unwrap();
        let jbytes_a = fs::read(&json_a).unwrap();
        let (csv_b, json_b) = emit_report(&report, dir.path(), "report").unwrap();
        assert_eq!(bytes_a, fs::read(&csv_b).unwrap());
        assert_eq!(jbytes_a, fs::read(&json_b).unwrap());

        let parsed: MetricsReport =
            serde_json::from_str(&fs::read_to_string(&json_a).unwrap()).unwrap();
        assert_eq!(parsed, report);

        let text = String::from_utf8(bytes_a).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "condition,cell,method,mean_kl,std_kl,map_var_acc,map_state_acc,n_models,n_failures"
        );
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn run_condition_is_deterministic() {
        let cond = Condition::with_cells(ConditionId::III, 3, vec![Cell::EdgeProb(0.5)]);
        let ctx = EvalContext::default();
        let a = run_condition(&cond, &[Method::Bp, Method::MeanField], Task::Marginals, &ctx, 7)
            .unwrap();
        let b = run_condition(&cond, &[Method::Bp, Method::MeanField], Task::Marginals, &ctx, 7)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gnn_methods_require_their_checkpoint() {
        let cond = Condition::with_cells(
            ConditionId::I,
            1,
            vec![Cell::Structure(StructureKind::Chain)],
        );
        let err = run_condition(
            &cond,
            &[Method::NodeGnn],
            Task::Marginals,
            &EvalContext::default(),
            0,
        );
        assert!(err.is_err());

        // And the checkpoint kind must match the method.
        let msg_weights = init_weights(&GnnArchitecture::msg(), &mut seeded_rng(0)).unwrap();
        let ctx = EvalContext {
            node_gnn: Some(&msg_weights),
            ..Default::default()
        };
        assert!(run_condition(&cond, &[Method::NodeGnn], Task::Marginals, &ctx, 0).is_err());
    }

    #[test]
    fn untrained_gnn_runs_through_the_harness() {
        let weights = init_weights(&GnnArchitecture::node(), &mut seeded_rng(11)).unwrap();
        let cond = Condition::with_cells(
            ConditionId::I,
            2,
            vec![Cell::Structure(StructureKind::Grid)],
        );
        let ctx = EvalContext {
            node_gnn: Some(&weights),
            ..Default::default()
        };
        let report = run_condition(&cond, &[Method::NodeGnn], Task::Marginals, &ctx, 2).unwrap();
        assert!(report.rows[0].mean_kl.unwrap().is_finite());
        assert_eq!(report.rows[0].n_models, 2);
        assert!(report.manifest.checkpoints.contains_key("node-gnn"));
    }

    #[test]
    fn zero_weight_checkpoint_traces_zero() {
        use crate::tape::Tensor;
        let mut weights = init_weights(&GnnArchitecture::node(), &mut seeded_rng(0)).unwrap();
        let zeroed: BTreeMap<String, Tensor> = weights
            .store
            .snapshot()
            .into_iter()
            .map(|(k, v)| {
                let (r, c) = v.shape();
                (k, Tensor::zeros(r, c))
            })
            .collect();
        weights.store.restore(&zeroed).unwrap();
        let cond = Condition::with_cells(
            ConditionId::I,
            2,
            vec![Cell::Structure(StructureKind::Cycle)],
        );
        let models = cond.cell_models(0, 1).unwrap();
        let stats = trace_convergence(&weights, &models, 10).unwrap();
        assert_eq!(stats.len(), 9);
        assert_eq!(stats[0].t, 2);
        assert_eq!(stats.last().unwrap().t, 10);
        assert!(stats.iter().all(|s| s.mean == 0.0 && s.std == 0.0));
        // A single step has no successive pair.
        assert!(trace_convergence(&weights, &models, 1).unwrap().is_empty());
    }

    #[test]
    fn max_product_is_rejected_for_marginal_scoring() {
        let cond = Condition::with_cells(
            ConditionId::I,
            1,
            vec![Cell::Structure(StructureKind::Chain)],
        );
        let models = cond.cell_models(0, 0).unwrap();
        assert!(eval_marginals(Method::MaxProduct, &models, &EvalContext::default()).is_err());
    }
}
