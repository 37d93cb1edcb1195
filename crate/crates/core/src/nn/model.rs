//! Model structure: towers of multigraph perceptron layers plus a readout.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MspError, Result};
use crate::filter::MimoFilter;
use crate::linalg::Matrix;
use crate::sampling::{PoolConfig, SelectionPlan};
use crate::tree::{DiffusionTree, WordSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mgnn,
    Merged,
    Parallel,
}

impl std::str::FromStr for Variant {
    type Err = MspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mgnn" => Ok(Self::Mgnn),
            "merged" => Ok(Self::Merged),
            "parallel" => Ok(Self::Parallel),
            _ => Err(MspError::InvalidArgument(format!("unknown model variant {s:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mgnn => "mgnn",
            Self::Merged => "merged",
            Self::Parallel => "parallel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl std::str::FromStr for Nonlinearity {
    type Err = MspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "identity" => Ok(Self::Identity),
            _ => Err(MspError::InvalidArgument(format!("unknown nonlinearity {s:?}"))),
        }
    }
}

impl Nonlinearity {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::Relu => {
                if v > 0.0 || v.is_nan() {
                    v
                } else {
                    0.0
                }
            }
            Self::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Self::Tanh => v.tanh(),
            Self::Identity => v,
        }
    }

    /// Derivative given the pre-activation `pre` and output `out`.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Self::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid => out * (1.0 - out),
            Self::Tanh => 1.0 - out * out,
            Self::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub filter: MimoFilter,
    pub nonlinearity: Nonlinearity,
}

/// A stack of layers reading a subset of the multigraph's classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    /// Multigraph class used for each of the tower's local classes.
    pub classes: Vec<usize>,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    /// Flattens node features (node-major) and applies `W·v + b`.
    Dense,
    /// Applies `X·W + 1bᵀ` to every node's feature row.
    NodeWise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutStage {
    pub kind: StageKind,
    /// Dense: `out × in`. NodeWise: `in × out`.
    pub weights: Matrix,
    pub bias: Matrix,
    pub activation: Nonlinearity,
}

impl ReadoutStage {
    pub fn out_dim(&self) -> usize {
        match self.kind {
            StageKind::Dense => self.weights.nrows(),
            StageKind::NodeWise => self.weights.ncols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub plan: SelectionPlan,
    pub pooling: Option<PoolConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgnnModel {
    pub variant: Variant,
    pub n_classes: usize,
    pub towers: Vec<Tower>,
    /// Selection plan shared by every tower; `None` keeps all nodes.
    pub sampling: Option<Sampling>,
    /// An empty readout outputs the flattened features.
    pub readout: Vec<ReadoutStage>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReadoutSpec {
    Flatten,
    /// Hidden widths then output width, all on flattened features.
    Dense { hidden: Vec<usize>, out: usize, hidden_activation: Nonlinearity, out_activation: Nonlinearity },
    NodeWise { out: usize, activation: Nonlinearity },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub variant: Variant,
    pub n_classes: usize,
    pub depth: usize,
    /// `F₀, G₁, …, G_L`.
    pub widths: Vec<usize>,
    /// One per layer.
    pub activations: Vec<Nonlinearity>,
    pub readout: ReadoutSpec,
    /// Word set for the full variant, e.g. from a pruned tree.
    pub words: Option<Arc<WordSet>>,
    pub sampling: Option<Sampling>,
    /// Node count `N` the readout is sized for.
    pub n_nodes: usize,
}

impl ArchSpec {
    pub fn new(variant: Variant, n_classes: usize, depth: usize, widths: Vec<usize>, n_nodes: usize) -> Self {
        let layers = widths.len().saturating_sub(1);
        Self {
            variant,
            n_classes,
            depth,
            widths,
            activations: vec![Nonlinearity::Relu; layers],
            readout: ReadoutSpec::Flatten,
            words: None,
            sampling: None,
            n_nodes,
        }
    }
}

impl MgnnModel {
    /// Builds and initializes a model. Filter coefficients are uniform in
    /// `±√(6/(F+G)) / |words|`; readout weights in `±√(6/(in+out))` with zero bias.
    pub fn build(spec: &ArchSpec, seed: u64) -> Result<Self> {
        let n_layers = spec.widths.len().checked_sub(1).filter(|&l| l > 0).ok_or_else(|| {
            MspError::InvalidArgument("need at least an input width and one layer width".into())
        })?;
        if spec.activations.len() != n_layers {
            return Err(MspError::InvalidArgument(format!(
                "{} activations for {n_layers} layers",
                spec.activations.len()
            )));
        }
        if spec.widths.iter().any(|&w| w == 0) || spec.n_classes == 0 {
            return Err(MspError::InvalidArgument("widths and class count must be positive".into()));
        }
        if let Some(s) = &spec.sampling {
            if s.plan.n_layers() != n_layers || s.plan.count(0) != spec.n_nodes {
                return Err(MspError::InvalidArgument("sampling plan does not match the layer stack".into()));
            }
            if let Some(p) = &s.pooling {
                if p.alpha.len() != n_layers {
                    return Err(MspError::InvalidArgument("one pooling reach per layer required".into()));
                }
            }
        }
        let m = spec.n_classes;
        let full = || -> Result<Arc<WordSet>> {
            Ok(Arc::new(DiffusionTree::unpruned(m, spec.depth)?.word_set().clone()))
        };
        let towers_words: Vec<(Vec<usize>, Arc<WordSet>)> = match spec.variant {
            Variant::Mgnn => {
                let words = match &spec.words {
                    Some(w) if w.m() != m => {
                        return Err(MspError::InvalidArgument("word set class count differs from the model".into()))
                    }
                    Some(w) => w.clone(),
                    None => full()?,
                };
                vec![((0..m).collect(), words)]
            }
            Variant::Merged => vec![((0..m).collect(), Arc::new(full()?.homogeneous()))],
            Variant::Parallel => {
                let single = Arc::new(DiffusionTree::unpruned(1, spec.depth)?.word_set().clone());
                (0..m).map(|c| (vec![c], single.clone())).collect()
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let towers = towers_words
            .into_iter()
            .map(|(classes, words)| {
                let layers = (0..n_layers)
                    .map(|l| {
                        let (f, g) = (spec.widths[l], spec.widths[l + 1]);
                        let mut filter = MimoFilter::zeros(words.clone(), f, g);
                        let bound = (6.0 / (f + g) as f64).sqrt() / words.len() as f64;
                        for c in filter.coeffs_mut() {
                            c.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
                        }
                        Layer { filter, nonlinearity: spec.activations[l] }
                    })
                    .collect();
                Tower { classes, layers }
            })
            .collect::<Vec<_>>();

        let n_last = spec.sampling.as_ref().map_or(spec.n_nodes, |s| *s.plan.counts().last().unwrap());
        let feats = spec.widths[n_layers] * towers.len();
        let mut init = |rows: usize, cols: usize, fan: usize| {
            let bound = (6.0 / fan as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
        };
        let readout = match &spec.readout {
            ReadoutSpec::Flatten => Vec::new(),
            ReadoutSpec::Dense { hidden, out, hidden_activation, out_activation } => {
                let mut dims = vec![n_last * feats];
                dims.extend(hidden);
                dims.push(*out);
                (0..dims.len() - 1)
                    .map(|k| ReadoutStage {
                        kind: StageKind::Dense,
                        weights: init(dims[k + 1], dims[k], dims[k] + dims[k + 1]),
                        bias: Matrix::zeros(dims[k + 1], 1),
                        activation: if k + 2 == dims.len() { *out_activation } else { *hidden_activation },
                    })
                    .collect()
            }
            ReadoutSpec::NodeWise { out, activation } => vec![ReadoutStage {
                kind: StageKind::NodeWise,
                weights: init(feats, *out, feats + out),
                bias: Matrix::zeros(1, *out),
                activation: *activation,
            }],
        };
        let model = Self { variant: spec.variant, n_classes: m, towers, sampling: spec.sampling.clone(), readout };
        model.validate()?;
        Ok(model)
    }

    pub fn n_layers(&self) -> usize {
        self.towers[0].layers.len()
    }

    pub fn input_features(&self) -> usize {
        self.towers[0].layers[0].filter.f_in()
    }

    /// Concatenated feature count at the end of the convolutional stack.
    pub fn stack_features(&self) -> usize {
        self.towers.iter().map(|t| t.layers.last().unwrap().filter.f_out()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.towers.is_empty() {
            return Err(MspError::InvalidArgument("model has no towers".into()));
        }
        let depth = self.towers[0].layers.len();
        let f0 = self.towers[0].layers.first().map(|l| l.filter.f_in());
        for (t, tower) in self.towers.iter().enumerate() {
            if tower.layers.len() != depth || tower.layers.is_empty() {
                return Err(MspError::InvalidArgument(format!("tower {t} has a different depth")));
            }
            if tower.layers[0].filter.f_in() != f0.unwrap() {
                return Err(MspError::Dimension(format!("tower {t} reads a different input width")));
            }
            if tower.classes.iter().any(|&c| c >= self.n_classes) {
                return Err(MspError::OutOfRange(format!("tower {t} reads a class outside 0..{}", self.n_classes)));
            }
            for (l, pair) in tower.layers.windows(2).enumerate() {
                if pair[0].filter.f_out() != pair[1].filter.f_in() {
                    return Err(MspError::Dimension(format!(
                        "tower {t}: layer {} emits {} features, layer {} expects {}",
                        l,
                        pair[0].filter.f_out(),
                        l + 1,
                        pair[1].filter.f_in()
                    )));
                }
            }
            for layer in &tower.layers {
                if layer.filter.word_set().m() != tower.classes.len() {
                    return Err(MspError::Dimension(format!("tower {t} filter class count mismatch")));
                }
            }
        }
        Ok(())
    }

    /// Filter parameter count per tower and layer, `|words|·F·G`.
    pub fn layer_param_counts(&self) -> Vec<Vec<usize>> {
        self.towers.iter().map(|t| t.layers.iter().map(|l| l.filter.n_params()).collect()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    /// All trainables in a fixed order: towers, layers, words (each matrix
    /// column-major), then readout weights and biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in &self.towers {
            for l in &t.layers {
                for c in l.filter.coeffs() {
                    out.extend_from_slice(c.as_slice());
                }
            }
        }
        for s in &self.readout {
            out.extend_from_slice(s.weights.as_slice());
            out.extend_from_slice(s.bias.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let mut it = values.iter().copied();
        let mut take = |m: &mut Matrix| -> Result<()> {
            for v in m.iter_mut() {
                *v = it.next().ok_or_else(|| MspError::Dimension("too few parameter values".into()))?;
            }
            Ok(())
        };
        for t in &mut self.towers {
            for l in &mut t.layers {
                for c in l.filter.coeffs_mut() {
                    take(c)?;
                }
            }
        }
        for s in &mut self.readout {
            take(&mut s.weights)?;
            take(&mut s.bias)?;
        }
        if values.len() != self.n_params() {
            return Err(MspError::Dimension("too many parameter values".into()));
        }
        Ok(())
    }

    pub fn zero_params(&mut self) {
        let n = self.n_params();
        self.set_params(&vec![0.0; n]).expect("length matches");
    }
}

/// Parallel or merged baseline with ReLU layers and a flatten readout.
pub fn build_baseline(variant: Variant, m: usize, depth: usize, widths: &[usize], n_nodes: usize, seed: u64) -> Result<MgnnModel> {
    if variant == Variant::Mgnn {
        return Err(MspError::InvalidArgument("baselines are merged or parallel".into()));
    }
    MgnnModel::build(&ArchSpec::new(variant, m, depth, widths.to_vec(), n_nodes), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Word;

    #[test]
    fn merged_words() {
        let merged = build_baseline(Variant::Merged, 2, 2, &[1, 3], 4, 0).unwrap();
        let words: Vec<String> = merged.towers[0].layers[0].filter.words().iter().map(|w| w.to_string()).collect();
        assert_eq!(words, ["I", "0", "1", "0-0", "1-1"]);

        let m1 = build_baseline(Variant::Merged, 1, 3, &[1, 2], 4, 0).unwrap();
        let full = MgnnModel::build(&ArchSpec::new(Variant::Mgnn, 1, 3, vec![1, 2], 4), 0).unwrap();
        assert_eq!(m1.towers[0].layers[0].filter.words(), full.towers[0].layers[0].filter.words());
    }

    #[test]
    fn parallel_towers_never_mix_classes() {
        let model = build_baseline(Variant::Parallel, 3, 3, &[2, 4, 4], 5, 0).unwrap();
        assert_eq!(model.towers.len(), 3);
        for (c, t) in model.towers.iter().enumerate() {
            assert_eq!(t.classes, vec![c]);
            for l in &t.layers {
                assert_eq!(l.filter.word_set().m(), 1);
                assert!(l.filter.words().iter().all(Word::is_homogeneous));
            }
        }
    }

    #[test]
    fn param_count_is_independent_of_nodes() {
        let small = MgnnModel::build(&ArchSpec::new(Variant::Mgnn, 2, 2, vec![3, 4, 5], 6), 1).unwrap();
        let big = MgnnModel::build(&ArchSpec::new(Variant::Mgnn, 2, 2, vec![3, 4, 5], 60), 1).unwrap();
        assert_eq!(small.layer_param_counts(), vec![vec![7 * 3 * 4, 7 * 4 * 5]]);
        assert_eq!(small.layer_param_counts(), big.layer_param_counts());
    }

    #[test]
    fn init_bounds_and_param_round_trip() {
        let mut spec = ArchSpec::new(Variant::Mgnn, 2, 2, vec![3, 4], 5);
        spec.readout = ReadoutSpec::Dense {
            hidden: vec![6],
            out: 2,
            hidden_activation: Nonlinearity::Tanh,
            out_activation: Nonlinearity::Identity,
        };
        let mut model = MgnnModel::build(&spec, 7).unwrap();
        let bound = (6.0f64 / 7.0).sqrt() / 7.0;
        for c in model.towers[0].layers[0].filter.coeffs() {
            assert!(c.iter().all(|v| v.abs() <= bound));
        }
        assert_eq!(model.readout[0].weights.shape(), (6, 20));
        let p = model.params();
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        model.set_params(&shifted).unwrap();
        assert_eq!(model.params(), shifted);
        assert!(model.set_params(&p[1..]).is_err());
        assert_eq!(MgnnModel::build(&spec, 7).unwrap().params(), p);
    }

    #[test]
    fn build_rejects_bad_specs() {
        assert!(MgnnModel::build(&ArchSpec::new(Variant::Mgnn, 2, 2, vec![3], 5), 0).is_err());
        let mut spec = ArchSpec::new(Variant::Mgnn, 2, 2, vec![3, 4], 5);
        spec.activations.clear();
        assert!(MgnnModel::build(&spec, 0).is_err());
        assert!(build_baseline(Variant::Mgnn, 2, 2, &[1, 2], 3, 0).is_err());
    }
}
