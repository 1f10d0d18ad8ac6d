//! Batch front end: generate corpora, train checkpoints, evaluate the
//! condition grid, trace network dynamics, and inspect single models.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use gnni_core::dataset::{generate_dataset, load_dataset, save_dataset, DatasetSpec};
use gnni_core::eval::{
    emit_report, emit_trace, run_condition, Condition, ConditionId, EvalContext, Method,
    TraceReport, REPORT_FORMAT_VERSION,
};
use gnni_core::gnn::{GnnArchitecture, GnnKind, GnnWeights};
use gnni_core::model::BinaryMrf;
use gnni_core::oracle::enumerate;
use gnni_core::train::{train, CheckpointFile, Task, TrainConfig};
use gnni_core::{GraphTopology, ModelFile};

#[derive(Parser)]
#[command(name = "gnni", version, about = "Inference on binary pairwise MRFs: exact, classical, and learned")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Node,
    Msg,
}

impl ArchArg {
    fn kind(self) -> GnnKind {
        match self {
            ArchArg::Node => GnnKind::NodeGnn,
            ArchArg::Msg => GnnKind::MsgGnn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Marginals,
    Map,
}

impl TaskArg {
    fn task(self) -> Task {
        match self {
            TaskArg::Marginals => Task::Marginals,
            TaskArg::Map => Task::Map,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset (or one condition's model files).
    Generate(GenerateArgs),
    /// Train a network on a generated dataset.
    Train(TrainArgs),
    /// Score methods over one condition of the generalization grid.
    Eval(EvalArgs),
    /// Emit per-step state-movement statistics for a trained checkpoint.
    Trace(TraceArgs),
    /// Print exact quantities for a single model file.
    Oracle(OracleArgs),
}

/// Values any flag can fall back to; the file mirrors the flag names.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    arch: Option<String>,
    task: Option<String>,
    condition: Option<String>,
    n: Option<usize>,
    train_per: Option<usize>,
    val_per: Option<usize>,
    test_per: Option<usize>,
    models_per_cell: Option<usize>,
    learning_rate: Option<f64>,
    max_epochs: Option<usize>,
    window: Option<usize>,
    batch: Option<usize>,
    grad_clip: Option<f64>,
    methods: Option<String>,
    t_max: Option<usize>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {p:?}: {e}")))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("bad config {p:?}: {e}")))
            }
        }
    }

    fn arch(&self) -> Result<Option<ArchArg>, CliError> {
        self.parse_enum(self.arch.as_deref(), "arch")
    }

    fn task(&self) -> Result<Option<TaskArg>, CliError> {
        self.parse_enum(self.task.as_deref(), "task")
    }

    fn parse_enum<T: ValueEnum>(&self, v: Option<&str>, what: &str) -> Result<Option<T>, CliError> {
        v.map(|s| {
            T::from_str(s, true).map_err(|_| CliError::usage(format!("bad {what} {s:?} in config")))
        })
        .transpose()
    }

    fn condition(&self) -> Result<Option<ConditionId>, CliError> {
        self.condition
            .as_deref()
            .map(|s| {
                ConditionId::parse(s)
                    .ok_or_else(|| CliError::usage(format!("bad condition {s:?} in config")))
            })
            .transpose()
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generate one condition's model set instead of the training corpus.
    #[arg(long)]
    condition: Option<String>,
    /// Node count for the training corpus.
    #[arg(long)]
    n: Option<usize>,
    /// Training models per structure.
    #[arg(long)]
    train_per: Option<usize>,
    /// Validation models per structure.
    #[arg(long)]
    val_per: Option<usize>,
    /// Test models per structure.
    #[arg(long)]
    test_per: Option<usize>,
    /// Models per condition cell.
    #[arg(long)]
    models_per_cell: Option<usize>,
    /// JSON file supplying defaults for any flag not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Early-stop window in validation checks.
    #[arg(long)]
    window: Option<usize>,
    /// Graphs per optimizer step.
    #[arg(long)]
    batch: Option<usize>,
    /// Max-abs gradient clip.
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Condition to run: I, II, III or IV.
    #[arg(long)]
    condition: Option<String>,
    /// Trained checkpoint files; kind is read from each file.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Comma-separated methods (oracle,mf,bp,trbp,max-product,node-gnn,msg-gnn).
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    models_per_cell: Option<usize>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    models_per_cell: Option<usize>,
    /// Steps to unroll.
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
}

struct CliError {
    message: String,
    usage: bool,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            usage: true,
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            usage: false,
        }
    }
}

impl From<gnni_core::Error> for CliError {
    fn from(e: gnni_core::Error) -> Self {
        match e {
            gnni_core::Error::Contract(_) => CliError::usage(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(if e.usage { 1 } else { 2 })
        }
    }
}

fn require_out(out: Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf, CliError> {
    out.or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::usage("--out is required (flag or config)"))
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let out = require_out(args.out, &cfg)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let condition = match args.condition.as_deref() {
        Some(s) => Some(
            ConditionId::parse(s).ok_or_else(|| CliError::usage(format!("bad condition {s:?}")))?,
        ),
        None => cfg.condition()?,
    };

    match condition {
        None => {
            let mut spec = DatasetSpec::paper_default();
            if let Some(n) = args.n.or(cfg.n) {
                spec.n = n;
            }
            if let Some(t) = args.train_per.or(cfg.train_per) {
                spec.train_per_structure = t;
            }
            if let Some(v) = args.val_per.or(cfg.val_per) {
                spec.val_per_structure = v;
            }
            if let Some(t) = args.test_per.or(cfg.test_per) {
                spec.test_per_structure = t;
            }
            let dataset = generate_dataset(&spec, seed)?;
            let manifest = save_dataset(&dataset, &out)?;
            println!(
                "wrote {} train / {} val / {} test models; manifest {}",
                dataset.train.len(),
                dataset.val.len(),
                dataset.test.len(),
                manifest.display()
            );
        }
        Some(id) => {
            let models_per_cell = args.models_per_cell.or(cfg.models_per_cell).unwrap_or(100);
            let cond = Condition::standard(id, models_per_cell);
            std::fs::create_dir_all(out.join("models")).map_err(|e| CliError::runtime(e.to_string()))?;
            let mut count = 0usize;
            for (idx, cell) in cond.cells.iter().enumerate() {
                for (i, model) in cond.cell_models(idx, seed)?.iter().enumerate() {
                    let rel = format!("models/{id}_{}_{i:04}.json", cell.name());
                    let file = ModelFile::from_model(model);
                    std::fs::write(
                        out.join(&rel),
                        serde_json::to_string(&file).map_err(|e| CliError::runtime(e.to_string()))?,
                    )
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                    count += 1;
                }
            }
            println!("wrote {count} condition-{id} models under {}", out.display());
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let out = require_out(args.out, &cfg)?;
    let arch_arg = match args.arch {
        Some(a) => a,
        None => cfg.arch()?.unwrap_or(ArchArg::Node),
    };
    let task = match args.task {
        Some(t) => t,
        None => cfg.task()?.unwrap_or(TaskArg::Marginals),
    }
    .task();

    let dataset = load_dataset(&args.data)?;
    let arch = GnnArchitecture::new(arch_arg.kind());
    let mut train_cfg = TrainConfig {
        task,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        ..Default::default()
    };
    if let Some(lr) = args.learning_rate.or(cfg.learning_rate) {
        train_cfg.learning_rate = lr;
    }
    if let Some(e) = args.max_epochs.or(cfg.max_epochs) {
        train_cfg.max_epochs = e;
    }
    if let Some(w) = args.window.or(cfg.window) {
        train_cfg.early_stop_window = w;
    }
    if let Some(b) = args.batch.or(cfg.batch) {
        train_cfg.batch_size = b;
    }
    if let Some(c) = args.grad_clip.or(cfg.grad_clip) {
        train_cfg.grad_clip = Some(c);
    }

    let (weights, history) = train(&dataset, &arch, &train_cfg)?;
    CheckpointFile::new(&weights, &train_cfg, &history).save(&out)?;
    println!(
        "trained {} on {} ({} epochs, best val loss {:.6} at epoch {}); checkpoint {}",
        arch.kind,
        train_cfg.task,
        history.train_loss.len(),
        history.best_val_loss,
        history.best_epoch,
        out.display()
    );
    Ok(())
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<(Option<GnnWeights>, Option<GnnWeights>), CliError> {
    let mut node = None;
    let mut msg = None;
    for path in paths {
        let checkpoint = CheckpointFile::load(path)?;
        let weights = checkpoint.weights.into_weights()?;
        match weights.arch.kind {
            GnnKind::NodeGnn => node = Some(weights),
            GnnKind::MsgGnn => msg = Some(weights),
        }
    }
    Ok((node, msg))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let out = require_out(args.out, &cfg)?;
    let id = match args.condition.as_deref() {
        Some(s) => ConditionId::parse(s).ok_or_else(|| CliError::usage(format!("bad condition {s:?}")))?,
        None => cfg
            .condition()?
            .ok_or_else(|| CliError::usage("--condition is required (flag or config)"))?,
    };
    let task = match args.task {
        Some(t) => t,
        None => cfg.task()?.unwrap_or(TaskArg::Marginals),
    }
    .task();
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let models_per_cell = args.models_per_cell.or(cfg.models_per_cell).unwrap_or(100);

    let methods_text = args
        .methods
        .or(cfg.methods)
        .unwrap_or_else(|| match task {
            Task::Marginals => "oracle,mf,bp,trbp".into(),
            Task::Map => "oracle,mf,max-product".into(),
        });
    let mut methods = Vec::new();
    for name in methods_text.split(',').filter(|s| !s.is_empty()) {
        methods.push(
            Method::parse(name.trim())
                .ok_or_else(|| CliError::usage(format!("unknown method {name:?}")))?,
        );
    }

    let (node, msg) = load_checkpoints(&args.checkpoint)?;
    let ctx = EvalContext {
        node_gnn: node.as_ref(),
        msg_gnn: msg.as_ref(),
        fixed_point: None,
    };
    let cond = Condition::standard(id, models_per_cell);
    let report = run_condition(&cond, &methods, task, &ctx, seed)?;
    let stem = format!("report_{id}_{task}");
    let (csv, json) = emit_report(&report, &out, &stem)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let out = require_out(args.out, &cfg)?;
    let id = match args.condition.as_deref() {
        Some(s) => ConditionId::parse(s).ok_or_else(|| CliError::usage(format!("bad condition {s:?}")))?,
        None => cfg.condition()?.unwrap_or(ConditionId::I),
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let models_per_cell = args.models_per_cell.or(cfg.models_per_cell).unwrap_or(10);
    let t_max = args.t_max.or(cfg.t_max).unwrap_or(10);

    let checkpoint = CheckpointFile::load(&args.checkpoint)?;
    let weights = checkpoint.weights.into_weights()?;
    let cond = Condition::standard(id, models_per_cell);
    let mut models = Vec::new();
    for idx in 0..cond.cells.len() {
        models.extend(cond.cell_models(idx, seed)?);
    }
    let stats = gnni_core::eval::trace_convergence(&weights, &models, t_max)?;
    let report = TraceReport {
        format_version: REPORT_FORMAT_VERSION,
        condition: id.to_string(),
        checkpoint: format!("{:016x}", weights.fingerprint()),
        t_max,
        stats,
    };
    let stem = format!("trace_{id}");
    let (csv, json) = emit_trace(&report, &out, &stem)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| CliError::usage(format!("cannot read model {:?}: {e}", args.model)))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("bad model file: {e}")))?;
    let topology = GraphTopology::new(file.n, file.edges.iter().map(|e| (e[0], e[1])).collect())?;
    let mrf = BinaryMrf::new(topology, file.j.clone(), file.b.clone())?;
    let result = enumerate(&mrf)?;
    println!("n: {}", mrf.n());
    println!("edges: {}", mrf.topology().edge_count());
    println!("log_Z: {:.12}", result.log_z);
    println!("map_log_score: {:.12}", result.map_log_score);
    print!("map_state:");
    for s in &result.map_state {
        print!(" {s:+}");
    }
    println!();
    println!("marginals_p1:");
    for (i, p) in result.marginals_p1.iter().enumerate() {
        println!("  {i}: {p:.12}");
    }
    Ok(())
}
