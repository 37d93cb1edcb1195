//! JSON checkpoints: architecture, per-word coefficients (row-major),
//! readout weights and free-form training metadata.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MspError, Result};
use crate::filter::{from_rows, to_rows, MimoFilter};
use crate::tree::{Word, WordSet};

use super::model::{Layer, MgnnModel, Nonlinearity, ReadoutStage, Sampling, StageKind, Tower, Variant};

#[derive(Serialize, Deserialize)]
struct LayerFile {
    nonlinearity: Nonlinearity,
    m: usize,
    f_in: usize,
    f_out: usize,
    coeffs: BTreeMap<Word, Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct TowerFile {
    classes: Vec<usize>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct StageFile {
    kind: StageKind,
    activation: Nonlinearity,
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    variant: Variant,
    n_classes: usize,
    towers: Vec<TowerFile>,
    sampling: Option<Sampling>,
    readout: Vec<StageFile>,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MgnnModel,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let file = CheckpointFile {
            variant: m.variant,
            n_classes: m.n_classes,
            towers: m
                .towers
                .iter()
                .map(|t| TowerFile {
                    classes: t.classes.clone(),
                    layers: t
                        .layers
                        .iter()
                        .map(|l| LayerFile {
                            nonlinearity: l.nonlinearity,
                            m: l.filter.word_set().m(),
                            f_in: l.filter.f_in(),
                            f_out: l.filter.f_out(),
                            coeffs: l.filter.words().iter().cloned().zip(l.filter.coeffs().iter().map(to_rows)).collect(),
                        })
                        .collect(),
                })
                .collect(),
            sampling: m.sampling.clone(),
            readout: m
                .readout
                .iter()
                .map(|s| StageFile {
                    kind: s.kind,
                    activation: s.activation,
                    weights: to_rows(&s.weights),
                    bias: to_rows(&s.bias),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        let mut towers = Vec::with_capacity(file.towers.len());
        for t in file.towers {
            let mut layers = Vec::with_capacity(t.layers.len());
            for l in t.layers {
                let words = Arc::new(WordSet::new(l.m, l.coeffs.keys().cloned().collect())?);
                let map = l
                    .coeffs
                    .iter()
                    .map(|(w, rows)| Ok((w.clone(), from_rows(rows, l.f_in, l.f_out)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                layers.push(Layer { filter: MimoFilter::from_map(words, l.f_in, l.f_out, &map)?, nonlinearity: l.nonlinearity });
            }
            towers.push(Tower { classes: t.classes, layers });
        }
        let readout = file
            .readout
            .into_iter()
            .map(|s| {
                let shape = |rows: &Vec<Vec<f64>>| (rows.len(), rows.first().map_or(0, |r| r.len()));
                let (wr, wc) = shape(&s.weights);
                let (br, bc) = shape(&s.bias);
                Ok(ReadoutStage {
                    kind: s.kind,
                    weights: from_rows(&s.weights, wr, wc)?,
                    bias: from_rows(&s.bias, br, bc)?,
                    activation: s.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = MgnnModel { variant: file.variant, n_classes: file.n_classes, towers, sampling: file.sampling, readout };
        model.validate()?;
        for s in &model.readout {
            let ok = match s.kind {
                StageKind::Dense => s.bias.shape() == (s.weights.nrows(), 1),
                StageKind::NodeWise => s.bias.shape() == (1, s.weights.ncols()),
            };
            if !ok {
                return Err(MspError::Dimension("readout bias shape does not match its weights".into()));
            }
        }
        Ok(Self { model, metadata: file.metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
