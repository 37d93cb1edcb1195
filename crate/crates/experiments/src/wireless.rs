//! Multi-band wireless power allocation: geometry, free-space path loss,
//! Rayleigh fading, sum-rate, heuristic policies and learned policies
//! trained by primal-dual learning.

use std::collections::BTreeMap;

use msp_core::linalg::Matrix;
use msp_core::nn::{
    env_outputs, train_primal_dual, ArchSpec, ConstrainedEnv, ConstrainedEval, DualStep, LossKind, MgnnModel,
    Nonlinearity, ReadoutSpec, TrainConfig, Variant,
};
use msp_core::{MspError, Multigraph};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{invalid, Config, ConfigError};
use crate::report::{mean_std, MetricRow, PlotPoint, Report, Trace};

/// `ψ = 20·log₁₀(d) + 20·log₁₀(ν) + 32.45` dB for `d` in meters and `ν` in GHz.
pub fn fspl(distance_m: f64, freq_ghz: f64) -> msp_core::Result<f64> {
    if !(distance_m > 0.0) || !(freq_ghz > 0.0) {
        return Err(MspError::InvalidArgument(format!(
            "distance {distance_m} m and frequency {freq_ghz} GHz must be positive"
        )));
    }
    Ok(20.0 * distance_m.log10() + 20.0 * freq_ghz.log10() + 32.45)
}

/// Linear gain `10^(−ψ/10)`.
pub fn channel_gain(psi_db: f64) -> f64 {
    10f64.powf(-psi_db / 10.0)
}

/// Rayleigh(1) draw by inversion, `√(−2 ln U)`.
pub fn rayleigh<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    (-2.0 * u.ln()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Receivers are uniform in `[−area, area]²`.
    pub area: f64,
    /// Transmitters are uniform within `±tx_radius` of their receiver.
    pub tx_radius: f64,
    pub bands_ghz: Vec<f64>,
    /// `ω²` in mW.
    pub noise: f64,
    /// Budget in mW on the expected total power over all bands.
    pub p_max: f64,
    pub top_k: usize,
    /// Distances are clamped below to this many meters.
    pub min_distance: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            n_tx: 10,
            n_rx: 4,
            area: 40.0,
            tx_radius: 10.0,
            bands_ghz: vec![2.4, 5.0],
            noise: 1e-6,
            p_max: 100.0,
            top_k: 20,
            min_distance: 1.0,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> msp_core::Result<()> {
        let bad = |m: &str| Err(MspError::InvalidArgument(m.to_string()));
        if self.n_tx == 0 || self.n_rx == 0 || self.n_rx > self.n_tx {
            return bad("need 1 <= receivers <= transmitters");
        }
        if self.bands_ghz.is_empty() || self.bands_ghz.iter().any(|&f| !(f > 0.0)) {
            return bad("bands must be positive frequencies");
        }
        if !(self.noise >= 0.0) || !(self.p_max >= 0.0) || !(self.area > 0.0) || !(self.tx_radius >= 0.0) {
            return bad("noise, budget and geometry must be nonnegative");
        }
        if self.top_k == 0 || !(self.min_distance > 0.0) {
            return bad("top_k and min_distance must be positive");
        }
        Ok(())
    }
}

/// One network layout with its per-band path-loss gains.
#[derive(Debug, Clone, PartialEq)]
pub struct WirelessEnv {
    pub params: EnvParams,
    pub receivers: Vec<[f64; 2]>,
    pub transmitters: Vec<[f64; 2]>,
    /// Receiver `r(i)` serving transmitter `i`.
    pub assignment: Vec<usize>,
    /// `path_gain[ν][(j, i)]`: gain from transmitter `j` at the receiver of link `i`.
    pub path_gain: Vec<Matrix>,
}

impl WirelessEnv {
    /// Random layout. Transmitter `i` is served by receiver `i mod R`.
    pub fn sample<R: Rng>(params: &EnvParams, rng: &mut R) -> msp_core::Result<Self> {
        params.validate()?;
        let receivers: Vec<[f64; 2]> = (0..params.n_rx)
            .map(|_| [rng.gen_range(-params.area..=params.area), rng.gen_range(-params.area..=params.area)])
            .collect();
        let assignment: Vec<usize> = (0..params.n_tx).map(|i| i % params.n_rx).collect();
        let r = params.tx_radius;
        let transmitters: Vec<[f64; 2]> = assignment
            .iter()
            .map(|&a| {
                let c = receivers[a];
                [c[0] + rng.gen_range(-r..=r), c[1] + rng.gen_range(-r..=r)]
            })
            .collect();
        Self::from_layout(params, receivers, transmitters, assignment)
    }

    pub fn from_layout(
        params: &EnvParams,
        receivers: Vec<[f64; 2]>,
        transmitters: Vec<[f64; 2]>,
        assignment: Vec<usize>,
    ) -> msp_core::Result<Self> {
        let t = transmitters.len();
        if assignment.len() != t || assignment.iter().any(|&a| a >= receivers.len()) {
            return Err(MspError::InvalidArgument("every transmitter needs a receiver".into()));
        }
        let mut path_gain = Vec::with_capacity(params.bands_ghz.len());
        for &f in &params.bands_ghz {
            let mut b = Matrix::zeros(t, t);
            for j in 0..t {
                for i in 0..t {
                    let rx = receivers[assignment[i]];
                    let tx = transmitters[j];
                    let d = ((tx[0] - rx[0]).powi(2) + (tx[1] - rx[1]).powi(2)).sqrt().max(params.min_distance);
                    b[(j, i)] = channel_gain(fspl(d, f)?);
                }
            }
            path_gain.push(b);
        }
        Ok(Self { params: params.clone(), receivers, transmitters, assignment, path_gain })
    }

    pub fn n_tx(&self) -> usize {
        self.transmitters.len()
    }

    pub fn n_bands(&self) -> usize {
        self.path_gain.len()
    }
}

/// Keeps the `k` largest entries of each row (ties to the lower column).
pub fn sparsify_rows(b: &mut Matrix, k: usize) {
    if k >= b.ncols() {
        return;
    }
    for i in 0..b.nrows() {
        let mut cols: Vec<usize> = (0..b.ncols()).collect();
        cols.sort_by(|&x, &y| b[(i, y)].total_cmp(&b[(i, x)]).then(x.cmp(&y)));
        for &c in &cols[k..] {
            b[(i, c)] = 0.0;
        }
    }
}

/// One fading realization per band: path gain times Rayleigh fading,
/// rows sparsified to the `top_k` largest entries.
pub fn sample_channels(env: &WirelessEnv, seed: u64) -> Vec<Matrix> {
    draw_channels(env, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn draw_channels<R: Rng>(env: &WirelessEnv, rng: &mut R) -> Vec<Matrix> {
    env.path_gain
        .iter()
        .map(|pl| {
            let mut b = pl.map(|g| g * rayleigh(rng));
            sparsify_rows(&mut b, env.params.top_k);
            b
        })
        .collect()
}

fn check_powers(q: &[Vec<f64>], channels: &[Matrix]) -> msp_core::Result<()> {
    if q.len() != channels.len() {
        return Err(MspError::Dimension(format!("{} power vectors for {} bands", q.len(), channels.len())));
    }
    for (qb, b) in q.iter().zip(channels) {
        if qb.len() != b.nrows() {
            return Err(MspError::Dimension("power vector length differs from transmitter count".into()));
        }
        if let Some(v) = qb.iter().find(|v| !(**v >= 0.0)) {
            return Err(MspError::InvalidArgument(format!("power {v} is negative or NaN")));
        }
    }
    Ok(())
}

/// `Σ_ν Σ_i ln(1 + b_ii q_i / (ω² + Σ_{j≠i} b_ji q_j))` for one realization.
pub fn realization_rate(q: &[Vec<f64>], channels: &[Matrix], noise: f64) -> msp_core::Result<f64> {
    check_powers(q, channels)?;
    let mut total = 0.0;
    for (qb, b) in q.iter().zip(channels) {
        for i in 0..qb.len() {
            let interference: f64 = noise + (0..qb.len()).filter(|&j| j != i).map(|j| b[(j, i)] * qb[j]).sum::<f64>();
            let signal = b[(i, i)] * qb[i];
            if signal > 0.0 {
                total += (signal / interference).ln_1p();
            }
        }
    }
    Ok(total)
}

/// Mean of [`realization_rate`] over fading realizations.
pub fn sum_rate(q: &[Vec<f64>], realizations: &[Vec<Matrix>], noise: f64) -> msp_core::Result<f64> {
    if realizations.is_empty() {
        return Err(MspError::InvalidArgument("no channel realizations".into()));
    }
    let mut total = 0.0;
    for ch in realizations {
        total += realization_rate(q, ch, noise)?;
    }
    Ok(total / realizations.len() as f64)
}

/// Rate and its gradient with respect to every `q[ν][k]`.
fn rate_and_grad(q: &[Vec<f64>], channels: &[Matrix], noise: f64) -> (f64, Vec<Vec<f64>>) {
    let mut total = 0.0;
    let mut grad: Vec<Vec<f64>> = q.iter().map(|qb| vec![0.0; qb.len()]).collect();
    for ((qb, b), gb) in q.iter().zip(channels).zip(&mut grad) {
        let t = qb.len();
        for i in 0..t {
            let interference: f64 = noise + (0..t).filter(|&j| j != i).map(|j| b[(j, i)] * qb[j]).sum::<f64>();
            let signal = b[(i, i)] * qb[i];
            let denom = interference + signal;
            if denom <= 0.0 {
                continue;
            }
            total += (signal / interference).ln_1p();
            gb[i] += b[(i, i)] / denom;
            if interference > 0.0 {
                let cross = 1.0 / denom - 1.0 / interference;
                for j in (0..t).filter(|&j| j != i) {
                    gb[j] += b[(j, i)] * cross;
                }
            }
        }
    }
    (total, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    Equal,
    RandomHalf,
}

/// Equal: `P_max/(2T)` everywhere. Random half: per band, a random half of
/// the transmitters at `P_max/T`, the rest off.
pub fn heuristic_policy<R: Rng>(kind: Heuristic, n_tx: usize, n_bands: usize, p_max: f64, rng: &mut R) -> Vec<Vec<f64>> {
    match kind {
        Heuristic::Equal => vec![vec![p_max / (n_bands * n_tx) as f64; n_tx]; n_bands],
        Heuristic::RandomHalf => (0..n_bands)
            .map(|_| {
                let mut q = vec![0.0; n_tx];
                for i in sample(rng, n_tx, n_tx / 2) {
                    q[i] = p_max / n_tx as f64;
                }
                q
            })
            .collect(),
    }
}

/// Per-band operators handed to the policy: `Bᵀ`, optionally spectrally normalized.
pub fn policy_graph(channels: &[Matrix], normalize: bool) -> msp_core::Result<Multigraph> {
    let mg = Multigraph::from_matrices(channels.iter().map(Matrix::transpose).collect())?;
    Ok(if normalize { mg.spectrally_normalized() } else { mg })
}

/// Reads band powers from a model output (`T·bands × 1` node-major or `T × bands`).
fn powers_from_output(out: &Matrix, n_tx: usize, n_bands: usize, unit: f64) -> msp_core::Result<Vec<Vec<f64>>> {
    let at = |i: usize, band: usize| -> f64 {
        if out.ncols() == 1 {
            out[(i * n_bands + band, 0)]
        } else {
            out[(i, band)]
        }
    };
    if out.len() != n_tx * n_bands || !(out.ncols() == 1 || out.ncols() == n_bands) {
        return Err(MspError::Dimension(format!("policy output {}x{} for {n_tx} transmitters", out.nrows(), out.ncols())));
    }
    Ok((0..n_bands).map(|b| (0..n_tx).map(|i| unit * at(i, b)).collect()).collect())
}

fn output_from_powers(template: &Matrix, g: &[Vec<f64>], unit: f64) -> Matrix {
    let n_bands = g.len();
    let mut out = Matrix::zeros(template.nrows(), template.ncols());
    for (b, gb) in g.iter().enumerate() {
        for (i, v) in gb.iter().enumerate() {
            if template.ncols() == 1 {
                out[(i * n_bands + b, 0)] = unit * v;
            } else {
                out[(i, b)] = unit * v;
            }
        }
    }
    out
}

pub struct Realization {
    pub channels: Vec<Matrix>,
    pub graph: Multigraph,
    pub input: Matrix,
}

/// Fresh layouts and fading draws for primal-dual training.
pub struct TrainingEnv {
    pub params: EnvParams,
    pub draws: usize,
    pub normalize: bool,
    /// Power represented by a policy output of 1, in mW.
    pub unit: f64,
    rng: ChaCha8Rng,
}

impl TrainingEnv {
    pub fn new(params: EnvParams, draws: usize, normalize: bool, unit: f64, seed: u64) -> Self {
        Self { params, draws, normalize, unit, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

pub fn realizations<R: Rng>(env: &WirelessEnv, draws: usize, normalize: bool, rng: &mut R) -> msp_core::Result<Vec<Realization>> {
    (0..draws)
        .map(|_| {
            let channels = draw_channels(env, rng);
            let graph = policy_graph(&channels, normalize)?;
            Ok(Realization { channels, graph, input: Matrix::from_element(env.n_tx(), 1, 1.0) })
        })
        .collect()
}

impl ConstrainedEnv for TrainingEnv {
    type Batch = Vec<Realization>;

    fn sample(&mut self, _iteration: usize) -> msp_core::Result<Vec<Realization>> {
        let env = WirelessEnv::sample(&self.params, &mut self.rng)?;
        realizations(&env, self.draws, self.normalize, &mut self.rng)
    }

    fn inputs<'a>(&'a self, batch: &'a Vec<Realization>) -> Vec<(&'a Multigraph, &'a Matrix)> {
        batch.iter().map(|r| (&r.graph, &r.input)).collect()
    }

    fn evaluate(&self, batch: &Vec<Realization>, outputs: &[Matrix]) -> msp_core::Result<ConstrainedEval> {
        let k = batch.len() as f64;
        let n_bands = self.params.bands_ghz.len();
        let mut eval = ConstrainedEval { objective: 0.0, d_objective: Vec::new(), constraint: 0.0, d_constraint: Vec::new() };
        for (r, out) in batch.iter().zip(outputs) {
            let q = powers_from_output(out, r.input.nrows(), n_bands, self.unit)?;
            let (rate, g) = rate_and_grad(&q, &r.channels, self.params.noise);
            eval.objective -= rate / k;
            let neg: Vec<Vec<f64>> = g.iter().map(|gb| gb.iter().map(|v| -v / k).collect()).collect();
            eval.d_objective.push(output_from_powers(out, &neg, self.unit));
            eval.constraint += q.iter().flatten().sum::<f64>() / k;
            let ones: Vec<Vec<f64>> = q.iter().map(|qb| vec![1.0 / k; qb.len()]).collect();
            eval.d_constraint.push(output_from_powers(out, &ones, self.unit));
        }
        eval.constraint -= self.params.p_max;
        Ok(eval)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WirelessConfig {
    pub env: EnvParams,
    pub p_max_values: Vec<f64>,
    pub models: Vec<Variant>,
    pub depth: usize,
    pub hidden: usize,
    pub iterations: usize,
    pub fading_draws: usize,
    pub eval_configs: usize,
    pub eval_draws: usize,
    pub lr: f64,
    pub dual_lr: f64,
    pub decay: f64,
    pub normalize: bool,
    pub seeds: Vec<u64>,
}

pub const WIRELESS_KEYS: &[&str] = &[
    "n_tx",
    "n_rx",
    "area",
    "tx_radius",
    "bands",
    "noise",
    "p_max",
    "top_k",
    "min_distance",
    "models",
    "depth",
    "hidden",
    "iterations",
    "fading_draws",
    "eval_configs",
    "eval_draws",
    "lr",
    "dual_lr",
    "decay",
    "normalize",
    "seeds",
];

impl Default for WirelessConfig {
    fn default() -> Self {
        Self {
            env: EnvParams::default(),
            p_max_values: vec![10.0, 50.0, 100.0],
            models: vec![Variant::Mgnn, Variant::Merged, Variant::Parallel],
            depth: 3,
            hidden: 2,
            iterations: 2000,
            fading_draws: 100,
            eval_configs: 100,
            eval_draws: 100,
            lr: 0.01,
            dual_lr: 0.001,
            decay: 0.9995,
            normalize: true,
            seeds: vec![0],
        }
    }
}

impl WirelessConfig {
    pub fn from_config(c: &Config) -> Result<Self, ConfigError> {
        c.check_keys(WIRELESS_KEYS)?;
        let d = Self::default();
        let env = EnvParams {
            n_tx: c.get("n_tx", d.env.n_tx)?,
            n_rx: c.get("n_rx", d.env.n_rx)?,
            area: c.get("area", d.env.area)?,
            tx_radius: c.get("tx_radius", d.env.tx_radius)?,
            bands_ghz: c.get_list("bands", d.env.bands_ghz.clone())?,
            noise: c.get("noise", d.env.noise)?,
            p_max: d.env.p_max,
            top_k: c.get("top_k", d.env.top_k)?,
            min_distance: c.get("min_distance", d.env.min_distance)?,
        };
        env.validate().map_err(|e| invalid("n_tx", e.to_string()))?;
        let cfg = Self {
            env,
            p_max_values: c.get_list("p_max", d.p_max_values)?,
            models: c.get_list("models", d.models)?,
            depth: c.get("depth", d.depth)?,
            hidden: c.get("hidden", d.hidden)?,
            iterations: c.get("iterations", d.iterations)?,
            fading_draws: c.get("fading_draws", d.fading_draws)?,
            eval_configs: c.get("eval_configs", d.eval_configs)?,
            eval_draws: c.get("eval_draws", d.eval_draws)?,
            lr: c.get("lr", d.lr)?,
            dual_lr: c.get("dual_lr", d.dual_lr)?,
            decay: c.get("decay", d.decay)?,
            normalize: c.get("normalize", d.normalize)?,
            seeds: c.get_list("seeds", d.seeds)?,
        };
        if cfg.p_max_values.is_empty() || cfg.p_max_values.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("p_max", "need at least one nonnegative budget"));
        }
        if cfg.fading_draws == 0 || cfg.eval_configs == 0 || cfg.eval_draws == 0 {
            return Err(invalid("fading_draws", "draw and configuration counts must be positive"));
        }
        if cfg.hidden == 0 {
            return Err(invalid("hidden", "must be positive"));
        }
        if cfg.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        Ok(cfg)
    }
}

/// Two layers of width `hidden` then `bands`, sigmoid then ReLU. The parallel
/// variant combines its per-band towers node-wise with a ReLU output.
///
/// Weights after the sigmoid layer start nonnegative. Inputs and channels are
/// nonnegative, so every band then starts with positive power instead of a
/// ReLU that may be dead on all nodes from the first step.
pub fn build_policy(variant: Variant, n_tx: usize, n_bands: usize, depth: usize, hidden: usize, seed: u64) -> msp_core::Result<MgnnModel> {
    let mut spec = ArchSpec::new(variant, n_bands, depth, vec![1, hidden, n_bands], n_tx);
    spec.activations = vec![Nonlinearity::Sigmoid, Nonlinearity::Relu];
    if variant == Variant::Parallel {
        spec.readout = ReadoutSpec::NodeWise { out: n_bands, activation: Nonlinearity::Relu };
    }
    let mut model = MgnnModel::build(&spec, seed)?;
    for tower in &mut model.towers {
        if let Some(last) = tower.layers.last_mut() {
            last.filter.coeffs_mut().iter_mut().for_each(|c| c.apply(|v| *v = v.abs()));
        }
    }
    for stage in &mut model.readout {
        stage.weights.apply(|v| *v = v.abs());
    }
    Ok(model)
}

/// Equal-power level, used as the output unit of learned policies.
pub fn power_unit(p_max: f64, n_tx: usize, n_bands: usize) -> f64 {
    if p_max > 0.0 {
        p_max / (n_tx * n_bands) as f64
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyScore {
    pub sum_rate: f64,
    pub mean_power: f64,
}

pub enum Policy<'a> {
    Learned(&'a MgnnModel),
    Heuristic(Heuristic),
}

/// Mean sum-rate and mean total power over seeded held-out layouts.
pub fn evaluate_policy(policy: &Policy<'_>, params: &EnvParams, cfg: &WirelessConfig, seed: u64) -> msp_core::Result<PolicyScore> {
    let mut layout_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heuristic_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4855_5249);
    let n_bands = params.bands_ghz.len();
    let unit = power_unit(params.p_max, params.n_tx, n_bands);
    let (mut rate, mut power, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..cfg.eval_configs {
        let env = WirelessEnv::sample(params, &mut layout_rng)?;
        let batch = realizations(&env, cfg.eval_draws, cfg.normalize, &mut layout_rng)?;
        match policy {
            Policy::Learned(model) => {
                let scorer = TrainingEnv::new(params.clone(), cfg.eval_draws, cfg.normalize, unit, 0);
                for (r, out) in batch.iter().zip(env_outputs(model, &scorer, &batch)?) {
                    let q = powers_from_output(&out, env.n_tx(), n_bands, unit)?;
                    let q: Vec<Vec<f64>> = q.into_iter().map(|b| b.into_iter().map(|v| v.max(0.0)).collect()).collect();
                    rate += realization_rate(&q, &r.channels, params.noise)?;
                    power += q.iter().flatten().sum::<f64>();
                    count += 1;
                }
            }
            Policy::Heuristic(kind) => {
                let q = heuristic_policy(*kind, env.n_tx(), n_bands, params.p_max, &mut heuristic_rng);
                for r in &batch {
                    rate += realization_rate(&q, &r.channels, params.noise)?;
                    power += q.iter().flatten().sum::<f64>();
                    count += 1;
                }
            }
        }
    }
    Ok(PolicyScore { sum_rate: rate / count as f64, mean_power: power / count as f64 })
}

pub struct TrainedPolicy {
    pub model: MgnnModel,
    pub trace: Vec<DualStep>,
}

pub fn train_policy(variant: Variant, params: &EnvParams, cfg: &WirelessConfig, seed: u64) -> msp_core::Result<TrainedPolicy> {
    let n_bands = params.bands_ghz.len();
    let mut model = build_policy(variant, params.n_tx, n_bands, cfg.depth, cfg.hidden, seed)?;
    let unit = power_unit(params.p_max, params.n_tx, n_bands);
    let mut env = TrainingEnv::new(params.clone(), cfg.fading_draws, cfg.normalize, unit, seed.wrapping_add(0x5eed));
    let tc = TrainConfig {
        loss: LossKind::NegativeSumRate,
        lr: cfg.lr,
        iterations: cfg.iterations,
        seed,
        decay: cfg.decay,
        dual_lr: cfg.dual_lr,
        ..TrainConfig::default()
    };
    let trace = train_primal_dual(&mut model, &mut env, &tc)?;
    Ok(TrainedPolicy { model, trace })
}

/// Trains and evaluates every learned policy and both heuristics for every
/// budget and seed.
pub fn run_wireless_experiment(cfg: &WirelessConfig) -> msp_core::Result<Report> {
    let mut rows = Vec::new();
    let mut traces = BTreeMap::new();
    for &p_max in &cfg.p_max_values {
        let params = EnvParams { p_max, ..cfg.env.clone() };
        for &seed in &cfg.seeds {
            let eval_seed = seed.wrapping_mul(0x9e37_79b9).wrapping_add(0xe7a1);
            for &variant in &cfg.models {
                let trained = train_policy(variant, &params, cfg, seed)?;
                let score = evaluate_policy(&Policy::Learned(&trained.model), &params, cfg, eval_seed)?;
                log::info!("p_max {p_max} seed {seed} {variant}: rate {:.4} power {:.3}", score.sum_rate, score.mean_power);
                rows.push(wireless_row(&variant.to_string(), p_max, seed, score, trained.model.n_params()));
                traces.insert(format!("{variant}_pmax{p_max}_seed{seed}"), Trace::Dual(trained.trace));
            }
            for (name, kind) in [("equal", Heuristic::Equal), ("random_half", Heuristic::RandomHalf)] {
                let score = evaluate_policy(&Policy::Heuristic(kind), &params, cfg, eval_seed)?;
                rows.push(wireless_row(name, p_max, seed, score, 0));
            }
        }
    }
    let mut points = Vec::new();
    let mut summary = BTreeMap::new();
    let models: Vec<String> = rows.iter().map(|r: &MetricRow| r.model.clone()).fold(Vec::new(), |mut acc, m| {
        if !acc.contains(&m) {
            acc.push(m);
        }
        acc
    });
    for &p_max in &cfg.p_max_values {
        for m in &models {
            let picked: Vec<&MetricRow> = rows.iter().filter(|r| &r.model == m && r.x == p_max).collect();
            let rates: Vec<f64> = picked.iter().map(|r| r.metric).collect();
            let powers: Vec<f64> = picked.iter().map(|r| r.extra["mean_power"]).collect();
            let (mean, std) = mean_std(&rates);
            points.push(PlotPoint { x: p_max, y: mean, series: m.clone() });
            summary.insert(
                format!("{m}@p_max={p_max}"),
                serde_json::json!({ "sum_rate_mean": mean, "sum_rate_std": std, "mean_power": mean_std(&powers).0 }),
            );
        }
    }
    Ok(Report {
        task: "wireless".into(),
        x_name: "p_max".into(),
        metric_name: "sum_rate".into(),
        rows,
        points,
        summary,
        traces,
    })
}

fn wireless_row(model: &str, p_max: f64, seed: u64, score: PolicyScore, params: usize) -> MetricRow {
    MetricRow {
        model: model.to_string(),
        x: p_max,
        seed,
        metric: score.sum_rate,
        extra: BTreeMap::from([("mean_power".to_string(), score.mean_power), ("params".to_string(), params as f64)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fspl_examples() {
        assert!((fspl(1.0, 1.0).unwrap() - 32.45).abs() < 1e-12);
        assert!((fspl(10.0, 2.4).unwrap() - 60.0543).abs() < 1e-3);
        let diff = fspl(20.0, 5.0).unwrap() - fspl(10.0, 5.0).unwrap();
        assert!((diff - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!(fspl(0.0, 2.4).is_err());
        assert!(fspl(1.0, -1.0).is_err());
    }

    #[test]
    fn gain_examples() {
        assert_eq!(channel_gain(0.0), 1.0);
        assert!((channel_gain(10.0) - 0.1).abs() < 1e-15);
        let g = channel_gain(60.0543);
        let exact = 10f64.powf(-6.00543);
        assert!(((g - exact) / exact).abs() <= 1e-9, "{g}");
        assert_eq!(format!("{g:.3e}"), "9.876e-7");
    }

    #[test]
    fn rayleigh_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let mean = (0..n).map(|_| rayleigh(&mut rng)).sum::<f64>() / n as f64;
        let expected = (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean - expected).abs() < 0.01 * expected);
    }

    #[test]
    fn channel_examples() {
        let params = EnvParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut env = WirelessEnv::sample(&params, &mut rng).unwrap();
        let a = sample_channels(&env, 5);
        assert_eq!(a, sample_channels(&env, 5));
        assert!(a.iter().all(|b| b.iter().all(|&v| v > 0.0)), "T <= 20 keeps every entry");
        env.path_gain.iter_mut().for_each(|b| b.fill(0.0));
        assert!(sample_channels(&env, 5).iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn sparsify_keeps_largest() {
        let mut b = Matrix::from_row_slice(2, 4, &[0.1, 0.4, 0.3, 0.2, 1.0, 1.0, 0.0, 2.0]);
        sparsify_rows(&mut b, 2);
        assert_eq!(b, Matrix::from_row_slice(2, 4, &[0.0, 0.4, 0.3, 0.0, 1.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn sum_rate_examples() {
        let one = vec![vec![Matrix::from_element(1, 1, 1.0)]];
        assert_eq!(sum_rate(&[vec![0.0]], &one, 1.0).unwrap(), 0.0);
        assert!((sum_rate(&[vec![1.0]], &one, 1.0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(sum_rate(&[vec![-1.0]], &one, 1.0).is_err());

        let b = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let alone = realization_rate(&[vec![1.0, 0.0]], std::slice::from_ref(&b), 1.0).unwrap();
        let both = realization_rate(&[vec![1.0, 1.0]], std::slice::from_ref(&b), 1.0).unwrap();
        let first_with_interference = (1.0f64 / (1.0 + 0.5)).ln_1p();
        assert!(first_with_interference < alone);
        assert!((both - 2.0 * first_with_interference).abs() < 1e-15);
    }

    #[test]
    fn rate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch: Vec<Matrix> = (0..2).map(|_| Matrix::from_fn(4, 4, |_, _| rng.gen_range(0.0..1.0))).collect();
        let q: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| rng.gen_range(0.1..2.0)).collect()).collect();
        let (_, g) = rate_and_grad(&q, &ch, 0.3);
        for b in 0..2 {
            for k in 0..4 {
                let mut up = q.clone();
                up[b][k] += 1e-6;
                let mut down = q.clone();
                down[b][k] -= 1e-6;
                let fd = (realization_rate(&up, &ch, 0.3).unwrap() - realization_rate(&down, &ch, 0.3).unwrap()) / 2e-6;
                assert!((fd - g[b][k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sum_rate_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let ch = vec![Matrix::from_fn(3, 3, |_, _| rng.gen_range(0.0..1.0))];
            let q = vec![(0..3).map(|_| rng.gen_range(0.0..2.0)).collect::<Vec<f64>>()];
            let base = realization_rate(&q, &ch, 0.5).unwrap();
            assert!(realization_rate(&q, &ch, 0.9).unwrap() <= base);
            // more power on link 0 never hurts link 0 and never helps the others
            let mut louder = q.clone();
            louder[0][0] += 0.5;
            let own = |qq: &Vec<Vec<f64>>, i: usize| {
                let interference: f64 = 0.5 + (0..3).filter(|&j| j != i).map(|j| ch[0][(j, i)] * qq[0][j]).sum::<f64>();
                (ch[0][(i, i)] * qq[0][i] / interference).ln_1p()
            };
            assert!(own(&louder, 0) >= own(&q, 0));
            assert!(own(&louder, 1) <= own(&q, 1) && own(&louder, 2) <= own(&q, 2));
        }
    }

    #[test]
    fn heuristics_meet_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [10.0, 50.0, 100.0] {
            let eq = heuristic_policy(Heuristic::Equal, 10, 2, p, &mut rng);
            assert_eq!(eq.iter().flatten().sum::<f64>(), p);
            let half = heuristic_policy(Heuristic::RandomHalf, 10, 2, p, &mut rng);
            assert_eq!(half.iter().flatten().filter(|&&v| v > 0.0).count(), 10);
            assert!((half.iter().flatten().sum::<f64>() - p).abs() <= 1e-12 * p);
        }
        assert_eq!(heuristic_policy(Heuristic::Equal, 1, 2, 8.0, &mut rng), vec![vec![4.0], vec![4.0]]);
    }

    #[test]
    fn zero_policies_score_zero() {
        let cfg = WirelessConfig { eval_configs: 3, eval_draws: 4, ..WirelessConfig::default() };
        for v in [Variant::Mgnn, Variant::Merged, Variant::Parallel] {
            let mut model = build_policy(v, 10, 2, 3, 2, 1).unwrap();
            model.zero_params();
            let s = evaluate_policy(&Policy::Learned(&model), &cfg.env, &cfg, 9).unwrap();
            assert_eq!(s.sum_rate, 0.0);
            assert_eq!(s.mean_power, 0.0);
        }
    }

    #[test]
    fn config_keys() {
        let c = Config::parse("n_tx = 12\np_max = 10, 20\nmodels = mgnn, parallel\nnormalize = false\n").unwrap();
        let w = WirelessConfig::from_config(&c).unwrap();
        assert_eq!(w.env.n_tx, 12);
        assert_eq!(w.p_max_values, vec![10.0, 20.0]);
        assert_eq!(w.models, vec![Variant::Mgnn, Variant::Parallel]);
        assert!(!w.normalize);
        assert!(WirelessConfig::from_config(&Config::parse("bogus = 1").unwrap()).is_err());
        assert!(WirelessConfig::from_config(&Config::parse("n_rx = 20").unwrap()).is_err());
    }
}
