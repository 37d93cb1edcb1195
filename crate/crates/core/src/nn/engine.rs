//! Batched forward pass with an activation tape, and the matching
//! reverse-mode backward pass.
//!
//! A batch of `B` signals with `F` features on `N` nodes is held as one
//! `N × (F·B)` matrix whose column `f·B + b` is feature `f` of sample `b`.
//! Diffusion then acts on the whole batch at once, and the same storage read
//! as `(N·B) × F` is what the coefficient matrices multiply.

use std::sync::Arc;

use nalgebra::{DMatrixView, Dyn};

use crate::error::{MspError, Result};
use crate::filter::diffuse;
use crate::linalg::Matrix;
use crate::multigraph::{MultiFeatureSignal, Multigraph, Permutation};
use crate::sampling::{layer_neighborhoods, pool_backward, pool_matrix, pooled_operators, Aggregator};

use super::model::{MgnnModel, Nonlinearity, StageKind};

struct LayerContext {
    ops: Vec<Matrix>,
    ops_t: Vec<Matrix>,
    n_in: usize,
    n_out: usize,
    pooling: Option<(Vec<Vec<usize>>, Aggregator)>,
}

/// Operators, sampling and neighborhoods of a model on one multigraph.
pub struct Prepared {
    towers: Vec<Vec<LayerContext>>,
    order: Option<Permutation>,
    n_nodes: usize,
}

impl Prepared {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Node count after the last layer.
    pub fn n_out(&self) -> usize {
        self.towers[0].last().map_or(self.n_nodes, |l| l.n_out)
    }

    /// Plan order of the output nodes, if the model samples.
    pub fn order(&self) -> Option<&Permutation> {
        self.order.as_ref()
    }
}

pub fn prepare(model: &MgnnModel, mg: &Multigraph) -> Result<Arc<Prepared>> {
    prepare_inner(model, mg, true)
}

/// Like [`prepare`] but keeps every node and skips pooling.
pub fn prepare_unsampled(model: &MgnnModel, mg: &Multigraph) -> Result<Arc<Prepared>> {
    prepare_inner(model, mg, false)
}

fn prepare_inner(model: &MgnnModel, mg: &Multigraph, sampled: bool) -> Result<Arc<Prepared>> {
    model.validate()?;
    if mg.n_classes() != model.n_classes {
        return Err(MspError::Dimension(format!(
            "model expects {} classes, multigraph has {}",
            model.n_classes,
            mg.n_classes()
        )));
    }
    let n = mg.n_nodes();
    let sampling = if sampled { model.sampling.as_ref() } else { None };
    let mut towers = Vec::with_capacity(model.towers.len());
    for tower in &model.towers {
        let sub = mg.select_classes(&tower.classes)?;
        let mut layers = Vec::with_capacity(tower.layers.len());
        for l in 0..tower.layers.len() {
            let ctx = match sampling {
                None => {
                    let ops: Vec<Matrix> = sub.matrices().into_iter().cloned().collect();
                    LayerContext { ops_t: ops.iter().map(|s| s.transpose()).collect(), ops, n_in: n, n_out: n, pooling: None }
                }
                Some(s) => {
                    let ops = pooled_operators(&s.plan, &sub, l + 1)?;
                    let pooling = match &s.pooling {
                        Some(p) => Some((layer_neighborhoods(&s.plan, &sub, l + 1, p.alpha[l])?, p.aggregator)),
                        None => None,
                    };
                    LayerContext {
                        ops_t: ops.iter().map(|s| s.transpose()).collect(),
                        ops,
                        n_in: s.plan.count(l),
                        n_out: s.plan.count(l + 1),
                        pooling,
                    }
                }
            };
            layers.push(ctx);
        }
        towers.push(layers);
    }
    if let Some(s) = sampling {
        if s.plan.count(0) != n {
            return Err(MspError::Dimension(format!("plan for {} nodes, multigraph has {n}", s.plan.count(0))));
        }
    }
    let readout_nodes = model.readout.iter().find(|s| s.kind == StageKind::Dense).map(|s| s.weights.ncols());
    let n_last = towers[0].last().map_or(n, |l| l.n_out);
    if let Some(cols) = readout_nodes {
        if model.readout[0].kind == StageKind::Dense && cols != n_last * model.stack_features() {
            return Err(MspError::Dimension(format!(
                "readout expects {cols} inputs, stack emits {}",
                n_last * model.stack_features()
            )));
        }
    }
    Ok(Arc::new(Prepared { towers, order: sampling.map(|s| s.plan.permutation()), n_nodes: n }))
}

fn reshape(m: Matrix, rows: usize, cols: usize) -> Matrix {
    m.reshape_generic(Dyn(rows), Dyn(cols))
}

fn view(m: &Matrix, rows: usize, cols: usize) -> DMatrixView<'_, f64> {
    DMatrixView::from_slice(m.as_slice(), rows, cols)
}

struct LayerTape {
    input: Matrix,
    z: Vec<Matrix>,
    pre: Matrix,
    post: Matrix,
}

#[derive(Clone)]
enum Repr {
    Nodes { mat: Matrix, n: usize, feats: usize },
    Flat(Matrix),
}

struct StageTape {
    input: Repr,
    pre: Matrix,
    post: Matrix,
}

/// Intermediates of one batched forward pass.
pub struct Tape {
    prepared: Arc<Prepared>,
    batch: usize,
    towers: Vec<Vec<LayerTape>>,
    stack: Matrix,
    stages: Vec<StageTape>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Name of the first tensor holding a NaN or infinity, in evaluation order.
    pub fn first_non_finite(&self) -> Option<String> {
        let bad = |m: &Matrix| m.iter().any(|v| !v.is_finite());
        for (t, layers) in self.towers.iter().enumerate() {
            for (l, lt) in layers.iter().enumerate() {
                if bad(&lt.input) {
                    return Some(format!("tower {t} layer {l} input"));
                }
                if let Some(w) = lt.z.iter().position(bad) {
                    return Some(format!("tower {t} layer {l} diffused signal {w}"));
                }
                if bad(&lt.pre) {
                    return Some(format!("tower {t} layer {l} pre-activation"));
                }
                if bad(&lt.post) {
                    return Some(format!("tower {t} layer {l} activation"));
                }
            }
        }
        for (k, st) in self.stages.iter().enumerate() {
            if bad(&st.pre) || bad(&st.post) {
                return Some(format!("readout stage {k}"));
            }
        }
        None
    }
}

fn activate(pre: &Matrix, f: Nonlinearity) -> Matrix {
    pre.map(|v| f.apply(v))
}

fn stack_inputs(xs: &[&Matrix], order: Option<&Permutation>, n: usize, f: usize) -> Result<Matrix> {
    let b = xs.len();
    for (k, x) in xs.iter().enumerate() {
        if x.shape() != (n, f) {
            return Err(MspError::Dimension(format!(
                "sample {k} is {}x{}, model expects {n}x{f}",
                x.nrows(),
                x.ncols()
            )));
        }
    }
    let row = |i: usize| order.map_or(i, |p| p.as_slice()[i]);
    Ok(Matrix::from_fn(n, f * b, |i, c| xs[c % b][(row(i), c / b)]))
}

/// Rows of the node-layout batch matrix per sample.
fn unstack(mat: &Matrix, feats: usize, batch: usize) -> Vec<Matrix> {
    (0..batch).map(|b| Matrix::from_fn(mat.nrows(), feats, |i, f| mat[(i, f * batch + b)])).collect()
}

fn flatten(mat: &Matrix, n: usize, feats: usize, batch: usize) -> Matrix {
    Matrix::from_fn(n * feats, batch, |r, b| mat[(r / feats, (r % feats) * batch + b)])
}

fn unflatten(flat: &Matrix, n: usize, feats: usize) -> Matrix {
    let batch = flat.ncols();
    Matrix::from_fn(n, feats * batch, |i, c| flat[(i * feats + c / batch, c % batch)])
}

fn run_stack(model: &MgnnModel, prep: &Prepared, xs: &[&Matrix]) -> Result<(Vec<Vec<LayerTape>>, Matrix)> {
    if prep.towers.len() != model.towers.len() {
        return Err(MspError::InvalidArgument("prepared context belongs to a different model".into()));
    }
    let batch = xs.len();
    if batch == 0 {
        return Err(MspError::InvalidArgument("empty batch".into()));
    }
    let input = stack_inputs(xs, prep.order.as_ref(), prep.n_nodes, model.input_features())?;
    let mut tapes = Vec::with_capacity(model.towers.len());
    let mut outs = Vec::with_capacity(model.towers.len());
    for (tower, ctxs) in model.towers.iter().zip(&prep.towers) {
        let mut h = input.clone();
        let mut layers = Vec::with_capacity(tower.layers.len());
        for (layer, ctx) in tower.layers.iter().zip(ctxs) {
            let (f, g) = (layer.filter.f_in(), layer.filter.f_out());
            let pooled = match &ctx.pooling {
                Some((nb, agg)) => pool_matrix(&h, nb, *agg)?,
                None => h.rows(0, ctx.n_out).into_owned(),
            };
            let ops: Vec<&Matrix> = ctx.ops.iter().collect();
            let z = diffuse(layer.filter.word_set(), &ops, &pooled)?;
            let mut y = Matrix::zeros(ctx.n_out * batch, g);
            for (zw, fw) in z.iter().zip(layer.filter.coeffs()) {
                y.gemm(1.0, &view(zw, ctx.n_out * batch, f), fw, 1.0);
            }
            let pre = reshape(y, ctx.n_out, g * batch);
            let post = activate(&pre, layer.nonlinearity);
            layers.push(LayerTape { input: h, z, pre, post: post.clone() });
            h = post;
        }
        outs.push(h);
        tapes.push(layers);
    }
    let n_last = outs[0].nrows();
    let total: usize = outs.iter().map(|o| o.ncols()).sum();
    let mut stack = Matrix::zeros(n_last, total);
    let mut col = 0;
    for o in &outs {
        stack.columns_mut(col, o.ncols()).copy_from(o);
        col += o.ncols();
    }
    Ok((tapes, stack))
}

/// Runs the model on a batch. Outputs are `D × 1` after a dense or flatten
/// readout and `N_L × out` after a node-wise readout.
pub fn forward_batch(model: &MgnnModel, prep: &Arc<Prepared>, xs: &[&Matrix]) -> Result<(Vec<Matrix>, Tape)> {
    let batch = xs.len();
    let (towers, stack) = run_stack(model, prep, xs)?;
    let mut repr = Repr::Nodes { mat: stack.clone(), n: stack.nrows(), feats: model.stack_features() };
    let mut stages = Vec::with_capacity(model.readout.len());
    for st in &model.readout {
        let (pre, next) = match (st.kind, &repr) {
            (StageKind::Dense, _) => {
                let flat = match &repr {
                    Repr::Nodes { mat, n, feats } => flatten(mat, *n, *feats, batch),
                    Repr::Flat(m) => m.clone(),
                };
                if flat.nrows() != st.weights.ncols() {
                    return Err(MspError::Dimension(format!(
                        "dense stage expects {} inputs, got {}",
                        st.weights.ncols(),
                        flat.nrows()
                    )));
                }
                let mut pre = &st.weights * flat;
                for mut c in pre.column_iter_mut() {
                    c += &st.bias.column(0);
                }
                let post = activate(&pre, st.activation);
                (pre, Repr::Flat(post))
            }
            (StageKind::NodeWise, Repr::Nodes { mat, n, feats }) => {
                if *feats != st.weights.nrows() {
                    return Err(MspError::Dimension(format!(
                        "node-wise stage expects {} features, got {feats}",
                        st.weights.nrows()
                    )));
                }
                let out = st.weights.ncols();
                let mut y = view(mat, n * batch, *feats) * &st.weights;
                for mut r in y.row_iter_mut() {
                    r += &st.bias.row(0);
                }
                let pre = reshape(y, *n, out * batch);
                let post = activate(&pre, st.activation);
                (pre, Repr::Nodes { mat: post, n: *n, feats: out })
            }
            (StageKind::NodeWise, Repr::Flat(_)) => {
                return Err(MspError::InvalidArgument("node-wise stage after a dense stage".into()))
            }
        };
        let post = match &next {
            Repr::Nodes { mat, .. } => mat.clone(),
            Repr::Flat(m) => m.clone(),
        };
        stages.push(StageTape { input: repr, pre, post });
        repr = next;
    }
    let outputs = match &repr {
        Repr::Nodes { mat, n, feats } if model.readout.is_empty() => {
            let flat = flatten(mat, *n, *feats, batch);
            (0..batch).map(|b| flat.columns(b, 1).into_owned()).collect()
        }
        Repr::Nodes { mat, feats, .. } => unstack(mat, *feats, batch),
        Repr::Flat(m) => (0..batch).map(|b| m.columns(b, 1).into_owned()).collect(),
    };
    Ok((outputs, Tape { prepared: prep.clone(), batch, towers, stack, stages }))
}

/// Single-sample forward on a freshly prepared multigraph.
pub fn forward(model: &MgnnModel, mg: &Multigraph, x: &MultiFeatureSignal) -> Result<(Matrix, Tape)> {
    let prep = prepare(model, mg)?;
    let (mut out, tape) = forward_batch(model, &prep, &[&x.values])?;
    Ok((out.remove(0), tape))
}

/// Convolutional-stack output per sample (`N_L × Σ G_L`), no readout.
pub fn forward_stack(model: &MgnnModel, prep: &Prepared, xs: &[&Matrix]) -> Result<Vec<Matrix>> {
    let (_, stack) = run_stack(model, prep, xs)?;
    Ok(unstack(&stack, model.stack_features(), xs.len()))
}

/// Partials of a scalar loss with respect to every trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    /// `[tower][layer][word]`, each `F × G`.
    pub filters: Vec<Vec<Vec<Matrix>>>,
    /// `(weights, bias)` per readout stage.
    pub readout: Vec<(Matrix, Matrix)>,
}

impl GradientSet {
    pub fn zeros(model: &MgnnModel) -> Self {
        Self {
            filters: model
                .towers
                .iter()
                .map(|t| {
                    t.layers
                        .iter()
                        .map(|l| l.filter.coeffs().iter().map(|c| Matrix::zeros(c.nrows(), c.ncols())).collect())
                        .collect()
                })
                .collect(),
            readout: model
                .readout
                .iter()
                .map(|s| (Matrix::zeros(s.weights.nrows(), s.weights.ncols()), Matrix::zeros(s.bias.nrows(), s.bias.ncols())))
                .collect(),
        }
    }

    /// Same order as [`MgnnModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in &self.filters {
            for l in t {
                for c in l {
                    out.extend_from_slice(c.as_slice());
                }
            }
        }
        for (w, b) in &self.readout {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

fn d_activation(d_post: &Matrix, pre: &Matrix, post: &Matrix, f: Nonlinearity) -> Matrix {
    if f == Nonlinearity::Identity {
        return d_post.clone();
    }
    Matrix::from_fn(d_post.nrows(), d_post.ncols(), |i, j| d_post[(i, j)] * f.derivative(pre[(i, j)], post[(i, j)]))
}

/// Reverse-mode gradients, summed over the batch, for per-sample upstream
/// gradients shaped like the outputs of [`forward_batch`].
pub fn backward(model: &MgnnModel, tape: &Tape, upstream: &[Matrix]) -> Result<GradientSet> {
    let batch = tape.batch;
    if upstream.len() != batch || tape.towers.len() != model.towers.len() || tape.stages.len() != model.readout.len() {
        return Err(MspError::InvalidArgument("tape does not match the model or upstream batch".into()));
    }
    let mut grads = GradientSet::zeros(model);

    // gradient in the representation the last stage produced
    let feats_out = model.readout.last().map_or(model.stack_features(), |s| s.out_dim());
    let n_last = tape.stack.nrows();
    let ends_flat = match model.readout.last() {
        None => true,
        Some(s) => s.kind == StageKind::Dense,
    };
    let mut d = if ends_flat {
        let rows = upstream[0].nrows();
        if upstream.iter().any(|u| u.shape() != (rows, 1)) {
            return Err(MspError::Dimension("upstream gradients must be column vectors".into()));
        }
        Matrix::from_fn(rows, batch, |r, b| upstream[b][(r, 0)])
    } else {
        if upstream.iter().any(|u| u.shape() != (n_last, feats_out)) {
            return Err(MspError::Dimension("upstream gradient shape differs from the output".into()));
        }
        Matrix::from_fn(n_last, feats_out * batch, |i, c| upstream[c % batch][(i, c / batch)])
    };
    if model.readout.is_empty() {
        d = unflatten(&d, n_last, model.stack_features());
    }

    for (k, (st, tp)) in model.readout.iter().zip(&tape.stages).enumerate().rev() {
        let d_pre = d_activation(&d, &tp.pre, &tp.post, st.activation);
        d = match st.kind {
            StageKind::Dense => {
                let flat_in = match &tp.input {
                    Repr::Nodes { mat, n, feats } => flatten(mat, *n, *feats, batch),
                    Repr::Flat(m) => m.clone(),
                };
                grads.readout[k].0 = &d_pre * flat_in.transpose();
                grads.readout[k].1 = Matrix::from_fn(d_pre.nrows(), 1, |r, _| d_pre.row(r).sum());
                let d_in = st.weights.tr_mul(&d_pre);
                match &tp.input {
                    Repr::Nodes { n, feats, .. } => unflatten(&d_in, *n, *feats),
                    Repr::Flat(_) => d_in,
                }
            }
            StageKind::NodeWise => {
                let Repr::Nodes { mat, n, feats } = &tp.input else {
                    return Err(MspError::InvalidArgument("node-wise stage taped without node input".into()));
                };
                let out = st.weights.ncols();
                let dv = view(&d_pre, n * batch, out);
                let xin = view(mat, n * batch, *feats);
                grads.readout[k].0 = xin.tr_mul(&dv);
                grads.readout[k].1 = Matrix::from_fn(1, out, |_, c| dv.column(c).sum());
                reshape(dv * st.weights.transpose(), *n, feats * batch)
            }
        };
    }

    let mut col = 0;
    for (t, (tower, ctxs)) in model.towers.iter().zip(&tape.prepared.towers).enumerate() {
        let width = tower.layers.last().unwrap().filter.f_out() * batch;
        let mut d_post = d.columns(col, width).into_owned();
        col += width;
        for (l, (layer, ctx)) in tower.layers.iter().zip(ctxs).enumerate().rev() {
            let lt = &tape.towers[t][l];
            let (f, g) = (layer.filter.f_in(), layer.filter.f_out());
            let n = ctx.n_out;
            let d_pre = d_activation(&d_post, &lt.pre, &lt.post, layer.nonlinearity);
            let dy = view(&d_pre, n * batch, g);
            let set = layer.filter.word_set();
            let mut dz: Vec<Matrix> = Vec::with_capacity(set.len());
            for ((zw, fw), gw) in lt.z.iter().zip(layer.filter.coeffs()).zip(grads.filters[t][l].iter_mut()) {
                *gw = view(zw, n * batch, f).tr_mul(&dy);
                dz.push(reshape(dy * fw.transpose(), n, f * batch));
            }
            for (idx, (w, link)) in set.words().iter().zip(set.suffix_links()).enumerate().rev() {
                if let Some(parent) = *link {
                    let (head, tail) = dz.split_at_mut(idx);
                    head[parent].gemm(1.0, &ctx.ops_t[w.indices()[0]], &tail[0], 1.0);
                }
            }
            let d_pooled = dz.swap_remove(0);
            d_post = match &ctx.pooling {
                Some((nb, agg)) => pool_backward(&lt.input, nb, *agg, &d_pooled),
                None => {
                    let mut full = Matrix::zeros(ctx.n_in, f * batch);
                    full.rows_mut(0, n).copy_from(&d_pooled);
                    full
                }
            };
        }
    }
    Ok(grads)
}

/// `‖stack(P̂ mg, Pᵀx) − Pᵀ stack(mg, x)‖∞` with sampling disabled.
pub fn check_permutation_equivariance(
    model: &MgnnModel,
    mg: &Multigraph,
    x: &MultiFeatureSignal,
    p: &Permutation,
) -> Result<f64> {
    let base = forward_stack(model, &*prepare_unsampled(model, mg)?, &[&x.values])?.remove(0);
    let (mg_p, x_p) = crate::multigraph::permute(mg, x, p)?;
    let permuted = forward_stack(model, &*prepare_unsampled(model, &mg_p)?, &[&x_p.values])?.remove(0);
    Ok((permuted - p.apply_rows(&base)).amax())
}
