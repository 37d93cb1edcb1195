//! Adam, supervised training and primal-dual constrained training.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MspError, Result};
use crate::linalg::Matrix;
use crate::multigraph::Multigraph;

use super::engine::{backward, forward_batch, prepare, GradientSet, Prepared};
use super::model::MgnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    MeanSquared,
    NegativeSumRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Epochs for supervised training.
    pub epochs: usize,
    /// Iterations for primal-dual training.
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Learning rates are multiplied by `decay` after every epoch (supervised)
    /// or iteration (primal-dual).
    pub decay: f64,
    pub dual_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::CrossEntropy,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            epochs: 10,
            iterations: 2000,
            batch_size: 32,
            seed: 0,
            decay: 1.0,
            dual_lr: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(MspError::InvalidArgument(format!("learning rate {} must be finite and nonnegative", self.lr)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(MspError::InvalidArgument(format!("decay {} outside (0, 1]", self.decay)));
        }
        if self.batch_size == 0 {
            return Err(MspError::InvalidArgument("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps_adam <= 0.0 {
            return Err(MspError::InvalidArgument("invalid Adam moments".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self { beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps_adam, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Values(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Matrix,
    pub target: Target,
}

/// Loss of one output and its gradient with respect to that output.
pub fn sample_loss(kind: LossKind, out: &Matrix, target: &Target) -> Result<(f64, Matrix)> {
    match (kind, target) {
        (LossKind::CrossEntropy, Target::Class(y)) => {
            if out.ncols() != 1 || *y >= out.nrows() {
                return Err(MspError::Dimension(format!("class {y} for a {}x{} output", out.nrows(), out.ncols())));
            }
            let max = out.max();
            let exp = out.map(|v| (v - max).exp());
            let z = exp.sum();
            let mut grad = exp / z;
            let loss = -(grad[(*y, 0)]).ln();
            grad[(*y, 0)] -= 1.0;
            Ok((loss, grad))
        }
        (LossKind::MeanSquared, Target::Values(t)) => {
            if t.shape() != out.shape() {
                return Err(MspError::Dimension("regression target shape differs from the output".into()));
            }
            let diff = out - t;
            let len = diff.len() as f64;
            Ok((diff.norm_squared() / len, diff * (2.0 / len)))
        }
        (kind, _) => Err(MspError::InvalidArgument(format!("{kind:?} does not accept this target"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Mean batch loss of each optimizer step.
    pub step_loss: Vec<f64>,
}

/// Mean loss and summed-then-averaged gradients of a batch.
fn batch_gradient(
    model: &MgnnModel,
    prep: &std::sync::Arc<Prepared>,
    batch: &[&Sample],
    loss: LossKind,
) -> Result<(f64, GradientSet)> {
    let xs: Vec<&Matrix> = batch.iter().map(|s| &s.x).collect();
    let (outs, tape) = forward_batch(model, prep, &xs)?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut ups = Vec::with_capacity(batch.len());
    for (o, s) in outs.iter().zip(batch) {
        let (l, g) = sample_loss(loss, o, &s.target)?;
        total += l;
        ups.push(g * scale);
    }
    let mean = total * scale;
    let grads = backward(model, &tape, &ups)?;
    if !mean.is_finite() || grads.flatten().iter().any(|g| !g.is_finite()) {
        let culprit = if let Some(name) = tape.first_non_finite() {
            name
        } else if let Some(k) = outs.iter().position(|o| o.iter().any(|v| !v.is_finite())) {
            format!("output of sample {k}")
        } else {
            "loss or gradient".to_string()
        };
        return Err(MspError::NonFinite(format!("non-finite loss; first non-finite tensor: {culprit}")));
    }
    Ok((mean, grads))
}

/// Trains in place on samples sharing one multigraph. Shuffling uses
/// `cfg.seed`; gradients are accumulated in sample order.
pub fn train(model: &mut MgnnModel, mg: &Multigraph, data: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(MspError::InvalidArgument("empty training set".into()));
    }
    let prep = prepare(model, mg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.n_params(), cfg);
    let mut params = model.params();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport { epoch_loss: Vec::with_capacity(cfg.epochs), step_loss: Vec::new() };
    let mut lr = cfg.lr;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = batch_gradient(model, &prep, &batch, cfg.loss)?;
            let flat = grads.flatten();
            adam.step(&mut params, &flat, lr);
            model.set_params(&params)?;
            sum += loss * chunk.len() as f64;
            report.step_loss.push(loss);
        }
        report.epoch_loss.push(sum / data.len() as f64);
        lr *= cfg.decay;
    }
    Ok(report)
}

/// Mean loss over a dataset without updating the model.
pub fn evaluate_loss(model: &MgnnModel, mg: &Multigraph, data: &[Sample], loss: LossKind) -> Result<f64> {
    let prep = prepare(model, mg)?;
    let mut total = 0.0;
    for chunk in data.chunks(64) {
        let xs: Vec<&Matrix> = chunk.iter().map(|s| &s.x).collect();
        let (outs, _) = forward_batch(model, &prep, &xs)?;
        for (o, s) in outs.iter().zip(chunk) {
            total += sample_loss(loss, o, &s.target)?.0;
        }
    }
    Ok(total / data.len() as f64)
}

/// Index of the largest output entry for each input.
pub fn predict_classes(model: &MgnnModel, mg: &Multigraph, xs: &[&Matrix]) -> Result<Vec<usize>> {
    let prep = prepare(model, mg)?;
    let mut out = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(64) {
        let (outs, _) = forward_batch(model, &prep, chunk)?;
        out.extend(outs.iter().map(|o| o.iter().enumerate().fold(0, |best, (k, v)| if *v > o[best] { k } else { best })));
    }
    Ok(out)
}

pub fn accuracy(model: &MgnnModel, mg: &Multigraph, data: &[Sample]) -> Result<f64> {
    let xs: Vec<&Matrix> = data.iter().map(|s| &s.x).collect();
    let pred = predict_classes(model, mg, &xs)?;
    let correct = pred
        .iter()
        .zip(data)
        .filter(|(p, s)| matches!(s.target, Target::Class(y) if y == **p))
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Objective and constraint of a batch, each averaged over the batch, with
/// gradients with respect to every output.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedEval {
    /// Minimized.
    pub objective: f64,
    pub d_objective: Vec<Matrix>,
    /// Kept at or below zero.
    pub constraint: f64,
    pub d_constraint: Vec<Matrix>,
}

pub trait ConstrainedEnv {
    type Batch;

    fn sample(&mut self, iteration: usize) -> Result<Self::Batch>;

    /// `(multigraph, input)` per batch element.
    fn inputs<'a>(&'a self, batch: &'a Self::Batch) -> Vec<(&'a Multigraph, &'a Matrix)>;

    fn evaluate(&self, batch: &Self::Batch, outputs: &[Matrix]) -> Result<ConstrainedEval>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualStep {
    pub step: usize,
    pub objective: f64,
    pub lambda: f64,
    pub slack: f64,
}

fn run_env_batch<E: ConstrainedEnv>(model: &MgnnModel, env: &E, batch: &E::Batch) -> Result<(Vec<Matrix>, Vec<super::engine::Tape>)> {
    let mut outs = Vec::new();
    let mut tapes = Vec::new();
    for (mg, x) in env.inputs(batch) {
        let prep = prepare(model, mg)?;
        let (mut o, tape) = forward_batch(model, &prep, &[x])?;
        outs.push(o.remove(0));
        tapes.push(tape);
    }
    Ok((outs, tapes))
}

/// Model outputs on an environment batch.
pub fn env_outputs<E: ConstrainedEnv>(model: &MgnnModel, env: &E, batch: &E::Batch) -> Result<Vec<Matrix>> {
    Ok(run_env_batch(model, env, batch)?.0)
}

/// Primal Adam steps on `objective + λ·constraint`, projected dual ascent
/// `λ ← max(0, λ + η·constraint)`; both step sizes decay geometrically.
pub fn train_primal_dual<E: ConstrainedEnv>(model: &mut MgnnModel, env: &mut E, cfg: &TrainConfig) -> Result<Vec<DualStep>> {
    cfg.validate()?;
    let mut adam = Adam::new(model.n_params(), cfg);
    let mut params = model.params();
    let mut lambda = 0.0f64;
    let (mut lr, mut dual_lr) = (cfg.lr, cfg.dual_lr);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        let batch = env.sample(step)?;
        let (outs, tapes) = run_env_batch(model, env, &batch)?;
        let eval = env.evaluate(&batch, &outs)?;
        if !eval.objective.is_finite() || !eval.constraint.is_finite() {
            let culprit = tapes.iter().find_map(|t| t.first_non_finite()).unwrap_or_else(|| "environment output".into());
            return Err(MspError::NonFinite(format!("non-finite Lagrangian at step {step}; first non-finite tensor: {culprit}")));
        }
        let mut flat = vec![0.0; params.len()];
        for ((tape, dobj), dcon) in tapes.iter().zip(&eval.d_objective).zip(&eval.d_constraint) {
            let up = dobj + dcon * lambda;
            let g = backward(model, tape, std::slice::from_ref(&up))?.flatten();
            for (a, b) in flat.iter_mut().zip(g) {
                *a += b;
            }
        }
        adam.step(&mut params, &flat, lr);
        model.set_params(&params)?;
        lambda = (lambda + dual_lr * eval.constraint).max(0.0);
        trace.push(DualStep { step, objective: eval.objective, lambda, slack: eval.constraint });
        lr *= cfg.decay;
        dual_lr *= cfg.decay;
    }
    Ok(trace)
}

/// `step,loss` rows.
pub fn loss_trace_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (k, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{k},{l:?}");
    }
    out
}

/// `step,loss,lambda,slack` rows.
pub fn dual_trace_csv(trace: &[DualStep]) -> String {
    let mut out = String::from("step,loss,lambda,slack\n");
    for s in trace {
        let _ = writeln!(out, "{},{:?},{:?},{:?}", s.step, s.objective, s.lambda, s.slack);
    }
    out
}
