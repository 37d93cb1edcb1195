//! `msp` command line: tree, spectral, train, eval, wireless and sourceloc.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use msp_core::io::{load_multigraph, load_signal_csv, Normalization};
use msp_core::linalg::Matrix;
use msp_core::nn::{
    accuracy, evaluate_loss, loss_trace_csv, train, Checkpoint, LossKind, Sample, Target, TrainConfig, Variant,
};
use msp_core::spectral::{joint_block_diagonalize, JbdOptions};
use msp_core::tree::generate_pruned_tree;
use msp_core::Multigraph;
use serde_json::json;

use crate::config::Config;
use crate::sourceloc::{build_classifier, generate_sourceloc_dataset, split_indices, SourceLocConfig, SOURCELOC_KEYS};
use crate::wireless::{run_wireless_experiment, WirelessConfig};
use crate::{report::Report, sourceloc::run_sourceloc_experiment};

/// Epsilon used by `--prune` without `--epsilon`.
pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "msp", version, about = "Multigraph signal processing and multigraph neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the (pruned) diffusion tree of a multigraph.
    Tree(TreeArgs),
    /// Joint block diagonalization of a symmetric multigraph.
    Spectral(SpectralArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint.
    Eval(EvalArgs),
    /// Multi-band power allocation experiment.
    Wireless(ExperimentArgs),
    /// Source localization experiment.
    Sourceloc(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Commutator threshold, a number or `inf`.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Prune with the default threshold when `--epsilon` is absent.
    #[arg(long)]
    pub prune: bool,
    /// Use the operators as read instead of dividing by their spectral norms.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Replace each operator by its symmetric part.
    #[arg(long)]
    pub symmetrize: bool,
    /// Relative eigenvalue gap separating blocks.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub signals: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub signals: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Comma-separated models.
    #[arg(long)]
    pub models: Option<String>,
    /// Wireless: training iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Wireless: comma-separated budgets in mW.
    #[arg(long = "p-max")]
    pub p_max: Option<String>,
    /// Source localization: training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Source localization: random splits per dataset.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Source localization: comma-separated community counts.
    #[arg(long)]
    pub communities: Option<String>,
    /// Also write per-model training traces.
    #[arg(long)]
    pub traces: bool,
}

fn load_config(common: &CommonArgs, flags: &[(&str, Option<String>)]) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v.clone());
        }
    }
    if let Some(seed) = common.seed {
        cfg.set(if flags.iter().any(|(k, _)| *k == "seeds") { "seeds" } else { "seed" }, seed.to_string());
    }
    cfg.apply_overrides(&common.set)?;
    Ok(cfg)
}

fn parse_epsilon(args: &TreeArgs) -> Result<f64> {
    match args.epsilon.as_deref() {
        None if args.prune => Ok(DEFAULT_PRUNE_EPSILON),
        None => Ok(f64::INFINITY),
        Some(s) if s.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
        Some(s) => s.parse().with_context(|| format!("epsilon {s:?} is neither a number nor inf")),
    }
}

/// Word list then a JSON line with the level counts.
pub fn tree_output(args: &TreeArgs) -> Result<String> {
    let norm = if args.raw { Normalization::None } else { Normalization::Spectral };
    let mg = load_multigraph(&args.input, norm)?;
    let eps = parse_epsilon(args)?;
    let tree = generate_pruned_tree(&mg, eps, args.depth)?;
    let mut out = String::new();
    for w in tree.words() {
        out.push_str(&w.to_string());
        out.push('\n');
    }
    let eps_json = if eps.is_finite() { json!(eps) } else { json!("inf") };
    let summary = json!({ "depth": args.depth, "epsilon": eps_json, "words": tree.words().len(), "level_counts": tree.level_counts() });
    out.push_str(&serde_json::to_string(&summary)?);
    out.push('\n');
    Ok(out)
}

pub fn spectral_output(args: &SpectralArgs) -> Result<String> {
    let mg = load_multigraph(&args.input, Normalization::None)?;
    let mut opts = JbdOptions { cluster_gap: args.tol, symmetrize: args.symmetrize, ..JbdOptions::default() };
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    let jbd = joint_block_diagonalize(&mg, &opts)?;
    let target = if args.symmetrize {
        Multigraph::from_matrices(mg.matrices().iter().map(|s| (*s + s.transpose()) * 0.5).collect())?
    } else {
        mg
    };
    let value = json!({
        "partition": jbd.partition(),
        "reconstruction_error": jbd.reconstruction_errors(&target),
        "ell": jbd.n_blocks(),
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub const TRAIN_KEYS: &[&str] =
    &["graph", "signals", "labels", "variant", "depth", "widths", "epochs", "lr", "batch_size", "seed", "checkpoint", "trace"];

fn check_train_keys(cfg: &Config) -> Result<()> {
    let known: Vec<&str> = TRAIN_KEYS.iter().chain(SOURCELOC_KEYS).copied().collect();
    cfg.check_keys(&known)?;
    Ok(())
}

/// Columns of `signals` are samples; `labels` holds one class per line.
pub fn load_labeled(signals: &Path, labels: &Path) -> Result<Vec<Sample>> {
    let x = load_signal_csv(signals)?;
    let text = fs::read_to_string(labels).with_context(|| format!("reading {}", labels.display()))?;
    let ys: Vec<usize> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(k, l)| l.parse().with_context(|| format!("label line {}: {l:?}", k + 1)))
        .collect::<Result<_>>()?;
    let m = &x.values;
    if ys.len() != m.ncols() {
        bail!("{} labels for {} signal columns", ys.len(), m.ncols());
    }
    Ok(ys
        .into_iter()
        .enumerate()
        .map(|(k, y)| Sample { x: Matrix::from_column_slice(m.nrows(), 1, m.column(k).as_slice()), target: Target::Class(y) })
        .collect())
}

struct Data {
    graph: Multigraph,
    train: Vec<Sample>,
    test: Vec<Sample>,
    n_classes: usize,
}

fn load_data(cfg: &Config, graph: Option<PathBuf>, signals: Option<PathBuf>, labels: Option<PathBuf>) -> Result<Data> {
    let pick = |flag: Option<PathBuf>, key: &str| flag.or_else(|| cfg.raw(key).map(PathBuf::from));
    let seed: u64 = cfg.get("seed", 0)?;
    match (pick(graph, "graph"), pick(signals, "signals"), pick(labels, "labels")) {
        (Some(g), Some(s), Some(l)) => {
            let graph = load_multigraph(&g, Normalization::Spectral)?;
            let samples = load_labeled(&s, &l)?;
            let n_classes = samples
                .iter()
                .map(|s| match s.target {
                    Target::Class(y) => y + 1,
                    Target::Values(_) => 0,
                })
                .max()
                .unwrap_or(1);
            Ok(Data { graph, train: samples.clone(), test: samples, n_classes })
        }
        (None, None, None) => {
            let sl = SourceLocConfig::from_known_keys(cfg)?;
            let params = crate::sourceloc::DatasetParams { n_communities: sl.communities[0], ..sl.dataset.clone() };
            let task = generate_sourceloc_dataset(&params, seed)?;
            let (tr, te) = split_indices(task.samples.len(), sl.train_frac, seed);
            let take = |idx: &[usize]| idx.iter().map(|&i| task.samples[i].clone()).collect();
            Ok(Data { train: take(&tr), test: take(&te), n_classes: task.n_communities, graph: task.graph })
        }
        _ => bail!("give graph, signals and labels together, or none of them to use a generated dataset"),
    }
}

pub fn train_command(args: TrainArgs) -> Result<String> {
    let cfg = load_config(
        &args.common,
        &[
            ("variant", args.variant.clone()),
            ("epochs", args.epochs.map(|v| v.to_string())),
            ("lr", args.lr.map(|v| v.to_string())),
        ],
    )?;
    check_train_keys(&cfg)?;
    let data = load_data(&cfg, args.graph, args.signals, args.labels)?;
    let variant: Variant = cfg.get("variant", Variant::Mgnn)?;
    let depth: usize = cfg.get("depth", 2)?;
    let widths: Vec<usize> = cfg.get_list("widths", vec![16, 16])?;
    let seed: u64 = cfg.get("seed", 0)?;
    let tc = TrainConfig {
        loss: LossKind::CrossEntropy,
        epochs: cfg.get("epochs", 10)?,
        lr: cfg.get("lr", 0.005)?,
        batch_size: cfg.get("batch_size", 32)?,
        seed,
        ..TrainConfig::default()
    };
    let n_features = data.train.first().map_or(1, |s| s.x.ncols());
    if n_features != 1 {
        bail!("training expects single-feature signals");
    }
    let mut model = build_classifier(variant, data.graph.n_nodes(), data.n_classes, depth, &widths, seed)?;
    let report = train(&mut model, &data.graph, &data.train, &tc)?;
    let train_acc = accuracy(&model, &data.graph, &data.train)?;
    let test_acc = accuracy(&model, &data.graph, &data.test)?;
    let mut ck = Checkpoint { model, metadata: Default::default() };
    ck.metadata.insert("epochs".into(), json!(tc.epochs));
    ck.metadata.insert("lr".into(), json!(tc.lr));
    ck.metadata.insert("seed".into(), json!(seed));
    ck.metadata.insert("final_loss".into(), json!(report.epoch_loss.last()));
    ck.metadata.insert("test_accuracy".into(), json!(test_acc));
    let ck_path = args.checkpoint.or_else(|| cfg.raw("checkpoint").map(PathBuf::from)).unwrap_or_else(|| "checkpoint.json".into());
    ck.save(&ck_path)?;
    if let Some(trace) = args.trace.or_else(|| cfg.raw("trace").map(PathBuf::from)) {
        fs::write(trace, loss_trace_csv(&report.step_loss))?;
    }
    let value = json!({
        "checkpoint": ck_path.display().to_string(),
        "params": ck.model.n_params(),
        "epoch_loss": report.epoch_loss,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn eval_command(args: EvalArgs) -> Result<String> {
    let cfg = load_config(&args.common, &[])?;
    check_train_keys(&cfg)?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    let data = load_data(&cfg, args.graph, args.signals, args.labels)?;
    let value = json!({
        "samples": data.test.len(),
        "accuracy": accuracy(&ck.model, &data.graph, &data.test)?,
        "loss": evaluate_loss(&ck.model, &data.graph, &data.test, LossKind::CrossEntropy)?,
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn experiment_flags(args: &ExperimentArgs, wireless: bool) -> Vec<(&'static str, Option<String>)> {
    let mut flags = vec![("seeds", args.seeds.clone()), ("models", args.models.clone())];
    if wireless {
        flags.push(("iterations", args.iterations.map(|v| v.to_string())));
        flags.push(("p_max", args.p_max.clone()));
    } else {
        flags.push(("epochs", args.epochs.map(|v| v.to_string())));
        flags.push(("splits", args.splits.map(|v| v.to_string())));
        flags.push(("communities", args.communities.clone()));
    }
    flags
}

fn write_report(report: &Report, args: &ExperimentArgs, prefix: &str) -> Result<String> {
    let files = report.write(&args.out, prefix, args.traces)?;
    let mut out = report.metrics_csv();
    for f in files {
        out.push_str(&format!("# wrote {}\n", f.display()));
    }
    Ok(out)
}

pub fn wireless_command(args: ExperimentArgs) -> Result<String> {
    if args.epochs.is_some() || args.splits.is_some() || args.communities.is_some() {
        bail!("--epochs, --splits and --communities belong to sourceloc");
    }
    let cfg = load_config(&args.common, &experiment_flags(&args, true))?;
    let wc = WirelessConfig::from_config(&cfg)?;
    let report = run_wireless_experiment(&wc)?;
    write_report(&report, &args, "wireless")
}

pub fn sourceloc_command(args: ExperimentArgs) -> Result<String> {
    if args.iterations.is_some() || args.p_max.is_some() {
        bail!("--iterations and --p-max belong to wireless");
    }
    let cfg = load_config(&args.common, &experiment_flags(&args, false))?;
    let sc = SourceLocConfig::from_config(&cfg)?;
    let report = run_sourceloc_experiment(&sc)?;
    write_report(&report, &args, "sourceloc")
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Tree(a) => tree_output(&a),
        Command::Spectral(a) => spectral_output(&a),
        Command::Train(a) => train_command(a),
        Command::Eval(a) => eval_command(a),
        Command::Wireless(a) => wireless_command(a),
        Command::Sourceloc(a) => sourceloc_command(a),
    }
}
