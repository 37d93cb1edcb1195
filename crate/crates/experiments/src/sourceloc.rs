//! Source localization on a synthetic two-class directed block model: a
//! one-hot source is diffused a random number of steps by randomly chosen
//! edge classes, and the model predicts the source's community.

use std::collections::BTreeMap;

use msp_core::linalg::Matrix;
use msp_core::nn::{
    accuracy, train, ArchSpec, LossKind, MgnnModel, Nonlinearity, ReadoutSpec, Sample, Target, TrainConfig, Variant,
};
use msp_core::{MspError, Multigraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{invalid, Config, ConfigError};
use crate::report::{mean_std, MetricRow, PlotPoint, Report, Trace};

/// Entries at or below this magnitude do not count toward the support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Expected out-degrees of one class: `within` into the own community,
/// `across` spread over all other communities and `forward` into community
/// `a + 1 (mod C)` on top of `across`. Edge probabilities follow from the
/// community sizes and are capped at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDensity {
    pub within: f64,
    pub across: f64,
    pub forward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub classes: [ClassDensity; 2],
    /// Probability that an edge also gets its reverse edge in the same class.
    pub reciprocity: f64,
    pub n_samples: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Rescale every signal to unit max-abs.
    pub normalize_signal: bool,
    /// Attempts before the acceptance rate is checked against `min_acceptance`.
    pub stall_attempts: usize,
    pub min_acceptance: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            n_nodes: 120,
            n_communities: 2,
            classes: [
                ClassDensity { within: 8.0, across: 0.2, forward: 3.0 },
                ClassDensity { within: 4.0, across: 0.5, forward: 1.0 },
            ],
            reciprocity: 0.7,
            n_samples: 1000,
            k_min: 1,
            k_max: 5,
            normalize_signal: true,
            stall_attempts: 500,
            min_acceptance: 0.01,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> msp_core::Result<()> {
        let bad = |m: &str| Err(MspError::InvalidArgument(m.to_string()));
        if self.n_nodes == 0 || self.n_communities == 0 || self.n_communities > self.n_nodes {
            return bad("need 1 <= communities <= nodes");
        }
        let degree = |d: f64| d.is_finite() && d >= 0.0;
        if self.classes.iter().any(|c| !degree(c.within) || !degree(c.across) || !degree(c.forward)) {
            return bad("expected degrees must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.reciprocity) {
            return bad("reciprocity must lie in [0, 1]");
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return bad("need 1 <= k_min <= k_max");
        }
        if self.n_samples == 0 || self.stall_attempts == 0 {
            return bad("sample and attempt counts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceLocTask {
    /// Spectrally normalized operators of both classes.
    pub graph: Multigraph,
    pub community: Vec<usize>,
    pub n_communities: usize,
    pub samples: Vec<Sample>,
    pub sources: Vec<usize>,
    pub attempts: usize,
}

/// Contiguous, as-equal-as-possible communities.
pub fn communities(n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|i| i * c / n).collect()
}

/// Directed block model, `M[dst][src] = 1` per edge, no self loops.
pub fn block_model<R: Rng>(params: &DatasetParams, rng: &mut R) -> msp_core::Result<Multigraph> {
    params.validate()?;
    let n = params.n_nodes;
    let c = params.n_communities;
    let comm = communities(n, c);
    let mut size = vec![0usize; c];
    comm.iter().for_each(|&k| size[k] += 1);
    let per = |d: f64, count: usize| if count == 0 { 0.0 } else { d / count as f64 };
    let mats = params
        .classes
        .iter()
        .map(|d| {
            let mut a = Matrix::zeros(n, n);
            for src in 0..n {
                for dst in 0..n {
                    if src == dst {
                        continue;
                    }
                    let (from, to) = (comm[src], comm[dst]);
                    let mut p = if from == to { per(d.within, size[from] - 1) } else { per(d.across, n - size[from]) };
                    if c > 1 && to == (from + 1) % c {
                        p += per(d.forward, size[to]);
                    }
                    if rng.gen::<f64>() < p.min(1.0) {
                        a[(dst, src)] = 1.0;
                        if rng.gen::<f64>() < params.reciprocity {
                            a[(src, dst)] = 1.0;
                        }
                    }
                }
            }
            a
        })
        .collect();
    Ok(Multigraph::from_matrices(mats)?.spectrally_normalized())
}

pub fn support(x: &Matrix) -> usize {
    x.iter().filter(|v| v.abs() > SUPPORT_TOL).count()
}

/// Samples on a given multigraph. A sample is kept when strictly more than
/// half of the nodes carry signal.
pub fn generate_on_graph(
    graph: Multigraph,
    community: Vec<usize>,
    params: &DatasetParams,
    seed: u64,
) -> msp_core::Result<SourceLocTask> {
    params.validate()?;
    let n = graph.n_nodes();
    if community.len() != n {
        return Err(MspError::Dimension("one community label per node required".into()));
    }
    let n_communities = community.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(params.n_samples);
    let mut sources = Vec::with_capacity(params.n_samples);
    let mut attempts = 0usize;
    while samples.len() < params.n_samples {
        attempts += 1;
        let source = rng.gen_range(0..n);
        let mut x = Matrix::zeros(n, 1);
        x[(source, 0)] = 1.0;
        for _ in 0..rng.gen_range(params.k_min..=params.k_max) {
            let class = rng.gen_range(0..graph.n_classes());
            x = graph.operator(class) * x;
        }
        if 2 * support(&x) > n {
            if params.normalize_signal {
                let peak = x.amax();
                x /= peak;
            }
            samples.push(Sample { x, target: Target::Class(community[source]) });
            sources.push(source);
        } else if attempts >= params.stall_attempts && (samples.len() as f64) < params.min_acceptance * attempts as f64 {
            return Err(MspError::InvalidArgument(format!(
                "sample generation stalled: {} of {attempts} draws reached half the nodes; use denser graph parameters",
                samples.len()
            )));
        }
    }
    Ok(SourceLocTask { graph, community, n_communities, samples, sources, attempts })
}

pub fn generate_sourceloc_dataset(params: &DatasetParams, seed: u64) -> msp_core::Result<SourceLocTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = block_model(params, &mut rng)?;
    let community = communities(params.n_nodes, params.n_communities);
    generate_on_graph(graph, community, params, rng.gen())
}

/// Seeded shuffled split; the first `train_frac` share is for training.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * train_frac).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceLocConfig {
    pub dataset: DatasetParams,
    pub communities: Vec<usize>,
    pub models: Vec<Variant>,
    pub depth: usize,
    pub widths: Vec<usize>,
    pub splits: usize,
    pub train_frac: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
}

pub const SOURCELOC_KEYS: &[&str] = &[
    "n_nodes",
    "communities",
    "class0_within",
    "class0_across",
    "class0_forward",
    "class1_within",
    "class1_across",
    "class1_forward",
    "reciprocity",
    "n_samples",
    "k_min",
    "k_max",
    "normalize_signal",
    "stall_attempts",
    "min_acceptance",
    "models",
    "depth",
    "widths",
    "splits",
    "train_frac",
    "epochs",
    "batch_size",
    "lr",
    "seeds",
];

impl Default for SourceLocConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetParams::default(),
            communities: vec![2, 10],
            models: vec![Variant::Mgnn, Variant::Merged, Variant::Parallel],
            depth: 2,
            widths: vec![16, 16],
            splits: 10,
            train_frac: 0.8,
            epochs: 10,
            batch_size: 32,
            lr: 0.005,
            seeds: vec![0],
        }
    }
}

impl SourceLocConfig {
    pub fn from_config(c: &Config) -> Result<Self, ConfigError> {
        c.check_keys(SOURCELOC_KEYS)?;
        Self::from_known_keys(c)
    }

    /// Like [`SourceLocConfig::from_config`] but ignores keys it does not know.
    pub fn from_known_keys(c: &Config) -> Result<Self, ConfigError> {
        let d = Self::default();
        let dd = &d.dataset;
        let class = |k: usize| -> Result<ClassDensity, ConfigError> {
            let def = dd.classes[k];
            Ok(ClassDensity {
                within: c.get(&format!("class{k}_within"), def.within)?,
                across: c.get(&format!("class{k}_across"), def.across)?,
                forward: c.get(&format!("class{k}_forward"), def.forward)?,
            })
        };
        let dataset = DatasetParams {
            n_nodes: c.get("n_nodes", dd.n_nodes)?,
            n_communities: dd.n_communities,
            classes: [class(0)?, class(1)?],
            reciprocity: c.get("reciprocity", dd.reciprocity)?,
            n_samples: c.get("n_samples", dd.n_samples)?,
            k_min: c.get("k_min", dd.k_min)?,
            k_max: c.get("k_max", dd.k_max)?,
            normalize_signal: c.get("normalize_signal", dd.normalize_signal)?,
            stall_attempts: c.get("stall_attempts", dd.stall_attempts)?,
            min_acceptance: c.get("min_acceptance", dd.min_acceptance)?,
        };
        dataset.validate().map_err(|e| invalid("n_nodes", e.to_string()))?;
        let cfg = Self {
            dataset,
            communities: c.get_list("communities", d.communities)?,
            models: c.get_list("models", d.models)?,
            depth: c.get("depth", d.depth)?,
            widths: c.get_list("widths", d.widths)?,
            splits: c.get("splits", d.splits)?,
            train_frac: c.get("train_frac", d.train_frac)?,
            epochs: c.get("epochs", d.epochs)?,
            batch_size: c.get("batch_size", d.batch_size)?,
            lr: c.get("lr", d.lr)?,
            seeds: c.get_list("seeds", d.seeds)?,
        };
        if cfg.communities.is_empty() || cfg.communities.iter().any(|&k| k == 0 || k > cfg.dataset.n_nodes) {
            return Err(invalid("communities", "each count must lie in 1..=n_nodes"));
        }
        if cfg.widths.is_empty() || cfg.widths.contains(&0) {
            return Err(invalid("widths", "need at least one positive layer width"));
        }
        if cfg.splits == 0 || !(cfg.train_frac > 0.0 && cfg.train_frac < 1.0) {
            return Err(invalid("train_frac", "need splits > 0 and 0 < train_frac < 1"));
        }
        if cfg.batch_size == 0 || cfg.seeds.is_empty() {
            return Err(invalid("batch_size", "batch size and seed list must be nonempty"));
        }
        Ok(cfg)
    }
}

/// ReLU layers and a linear readout to one score per community.
pub fn build_classifier(variant: Variant, n_nodes: usize, n_out: usize, depth: usize, widths: &[usize], seed: u64) -> msp_core::Result<MgnnModel> {
    let mut w = vec![1];
    w.extend_from_slice(widths);
    let mut spec = ArchSpec::new(variant, 2, depth, w, n_nodes);
    spec.readout =
        ReadoutSpec::Dense { hidden: vec![], out: n_out, hidden_activation: Nonlinearity::Identity, out_activation: Nonlinearity::Identity };
    MgnnModel::build(&spec, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub accuracy: f64,
    pub epoch_loss: Vec<f64>,
}

pub fn train_and_score(
    variant: Variant,
    task: &SourceLocTask,
    cfg: &SourceLocConfig,
    split: usize,
    seed: u64,
) -> msp_core::Result<(SplitResult, usize)> {
    let split_seed = seed.wrapping_mul(1000).wrapping_add(split as u64);
    let (train_idx, test_idx) = split_indices(task.samples.len(), cfg.train_frac, split_seed);
    let pick = |idx: &[usize]| -> Vec<Sample> { idx.iter().map(|&i| task.samples[i].clone()).collect() };
    let (train_set, test_set) = (pick(&train_idx), pick(&test_idx));
    let mut model = build_classifier(variant, task.graph.n_nodes(), task.n_communities, cfg.depth, &cfg.widths, split_seed)?;
    let tc = TrainConfig {
        loss: LossKind::CrossEntropy,
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: split_seed,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &task.graph, &train_set, &tc)?;
    let acc = if test_set.is_empty() { f64::NAN } else { accuracy(&model, &task.graph, &test_set)? };
    Ok((SplitResult { accuracy: acc, epoch_loss: report.epoch_loss }, model.n_params()))
}

/// Every model on every community count, seed and split.
pub fn run_sourceloc_experiment(cfg: &SourceLocConfig) -> msp_core::Result<Report> {
    let mut rows = Vec::new();
    let mut traces = BTreeMap::new();
    let mut points = Vec::new();
    let mut summary = BTreeMap::new();
    for &c in &cfg.communities {
        let params = DatasetParams { n_communities: c, ..cfg.dataset.clone() };
        let mut pooled: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for &seed in &cfg.seeds {
            let task = generate_sourceloc_dataset(&params, seed)?;
            log::info!("C={c} seed {seed}: {} samples from {} draws", task.samples.len(), task.attempts);
            for &variant in &cfg.models {
                let mut accs = Vec::with_capacity(cfg.splits);
                let mut n_params = 0;
                for split in 0..cfg.splits {
                    let (res, p) = train_and_score(variant, &task, cfg, split, seed)?;
                    n_params = p;
                    accs.push(res.accuracy);
                    if split == 0 {
                        traces.insert(format!("{variant}_C{c}_seed{seed}"), Trace::Loss(res.epoch_loss));
                    }
                }
                let (mean, std) = mean_std(&accs);
                log::info!("C={c} seed {seed} {variant}: accuracy {mean:.4} ± {std:.4} ({n_params} parameters)");
                rows.push(MetricRow {
                    model: variant.to_string(),
                    x: c as f64,
                    seed,
                    metric: mean,
                    extra: BTreeMap::from([("accuracy_std".to_string(), std), ("params".to_string(), n_params as f64)]),
                });
                let entry = pooled.entry(variant.to_string()).or_default();
                entry.0.extend(accs);
                entry.1 = n_params;
            }
        }
        for &variant in &cfg.models {
            let (accs, n_params) = &pooled[&variant.to_string()];
            let (mean, std) = mean_std(accs);
            points.push(PlotPoint { x: c as f64, y: mean, series: variant.to_string() });
            summary.insert(
                format!("{variant}@communities={c}"),
                serde_json::json!({ "accuracy_mean": mean, "accuracy_std": std, "params": n_params, "runs": accs.len() }),
            );
        }
    }
    Ok(Report {
        task: "sourceloc".into(),
        x_name: "communities".into(),
        metric_name: "accuracy".into(),
        rows,
        points,
        summary,
        traces,
    })
}
