//! Multigraph filters over diffusion-tree words: single-feature and MIMO
//! convolution, polynomial composition and shift-invariance checks.
//!
//! Evaluation never builds word operators. Words are visited in canonical
//! order and each diffused signal is one shift applied to the cached signal
//! of its suffix, `Z_w = S_{w₀} Z_{w[1..]}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MspError, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::multigraph::{MultiFeatureSignal, Multigraph, MultigraphSignal};
use crate::tree::{word_operator, DiffusionTree, Word, WordSet};

/// All diffused copies `Z_w = (word operator of w)·X`, aligned with `set`.
pub fn diffuse(set: &WordSet, ops: &[&Matrix], x: &Matrix) -> Result<Vec<Matrix>> {
    if ops.len() < set.m() {
        return Err(MspError::Dimension(format!("{} operators for {} classes", ops.len(), set.m())));
    }
    for op in ops {
        if op.ncols() != x.nrows() {
            return Err(MspError::Dimension(format!(
                "{}x{} operator applied to a {}-row signal",
                op.nrows(),
                op.ncols(),
                x.nrows()
            )));
        }
    }
    let mut out: Vec<Matrix> = Vec::with_capacity(set.len());
    for (w, link) in set.words().iter().zip(set.suffix_links()) {
        let z = match link {
            None => x.clone(),
            Some(parent) => ops[w.indices()[0]] * &out[*parent],
        };
        out.push(z);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultigraphFilter {
    tree: Arc<DiffusionTree>,
    coeffs: BTreeMap<Word, f64>,
}

impl MultigraphFilter {
    pub fn new(tree: Arc<DiffusionTree>, coeffs: BTreeMap<Word, f64>) -> Result<Self> {
        if let Some(w) = coeffs.keys().find(|w| !tree.contains(w)) {
            return Err(MspError::InvalidArgument(format!("word {w} is not in the diffusion tree")));
        }
        Ok(Self { tree, coeffs })
    }

    /// Coefficient 1 on the identity word.
    pub fn identity(tree: Arc<DiffusionTree>) -> Self {
        let coeffs = BTreeMap::from([(Word::identity(), 1.0)]);
        Self { tree, coeffs }
    }

    pub fn tree(&self) -> &Arc<DiffusionTree> {
        &self.tree
    }

    pub fn coeffs(&self) -> &BTreeMap<Word, f64> {
        &self.coeffs
    }

    pub fn coeff(&self, w: &Word) -> f64 {
        self.coeffs.get(w).copied().unwrap_or(0.0)
    }

    /// `Σ_w h_w · (word operator of w)` as a dense matrix.
    pub fn dense_matrix(&self, mg: &Multigraph) -> Result<Matrix> {
        dense_polynomial(self.coeffs.iter().map(|(w, c)| (w, *c)), mg)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SisoFile { depth: self.tree.depth(), m: self.tree.m(), coeffs: self.coeffs.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Reads a filter and attaches it to the unpruned tree of the stored depth.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SisoFile = serde_json::from_str(text)?;
        let tree = Arc::new(DiffusionTree::unpruned(file.m, file.depth)?);
        Self::new(tree, file.coeffs)
    }
}

pub(crate) fn dense_polynomial<'a>(terms: impl Iterator<Item = (&'a Word, f64)>, mg: &Multigraph) -> Result<Matrix> {
    let n = mg.n_nodes();
    let mut h = Matrix::zeros(n, n);
    for (w, c) in terms {
        h += word_operator(w, mg)? * c;
    }
    Ok(h)
}

#[derive(Serialize, Deserialize)]
struct SisoFile {
    depth: usize,
    m: usize,
    coeffs: BTreeMap<Word, f64>,
}

/// `z = Σ_w h_w (word operator of w) x`, accumulated in canonical word order.
pub fn apply_filter(h: &MultigraphFilter, mg: &Multigraph, x: &MultigraphSignal) -> Result<MultigraphSignal> {
    if x.len() != mg.n_nodes() {
        return Err(MspError::Dimension(format!("signal of length {} on {} nodes", x.len(), mg.n_nodes())));
    }
    if mg.n_classes() != h.tree.m() {
        return Err(MspError::Dimension(format!("filter over {} classes, multigraph has {}", h.tree.m(), mg.n_classes())));
    }
    let set = h.tree.word_set();
    let xm = Matrix::from_column_slice(x.len(), 1, x.values.as_slice());
    let diffused = diffuse(set, &mg.matrices(), &xm)?;
    let mut z = Vector::zeros(x.len());
    for (w, zw) in set.words().iter().zip(&diffused) {
        let c = h.coeff(w);
        if c != 0.0 {
            z.axpy(c, &zw.column(0), 1.0);
        }
    }
    Ok(MultigraphSignal::new(z))
}

/// Per-word `F × G` coefficient matrices over a suffix-closed word set.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoFilter {
    words: Arc<WordSet>,
    f_in: usize,
    f_out: usize,
    coeffs: Vec<Matrix>,
}

impl MimoFilter {
    pub fn zeros(words: Arc<WordSet>, f_in: usize, f_out: usize) -> Self {
        let coeffs = vec![Matrix::zeros(f_in, f_out); words.len()];
        Self { words, f_in, f_out, coeffs }
    }

    pub fn from_tree(tree: &DiffusionTree, f_in: usize, f_out: usize) -> Self {
        Self::zeros(Arc::new(tree.word_set().clone()), f_in, f_out)
    }

    /// Sets coefficients from a word map; absent words stay zero.
    pub fn from_map(words: Arc<WordSet>, f_in: usize, f_out: usize, map: &BTreeMap<Word, Matrix>) -> Result<Self> {
        let mut h = Self::zeros(words, f_in, f_out);
        for (w, mat) in map {
            h.set(w, mat.clone())?;
        }
        Ok(h)
    }

    pub fn word_set(&self) -> &Arc<WordSet> {
        &self.words
    }

    pub fn words(&self) -> &[Word] {
        self.words.words()
    }

    pub fn f_in(&self) -> usize {
        self.f_in
    }

    pub fn f_out(&self) -> usize {
        self.f_out
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Matrix] {
        &mut self.coeffs
    }

    pub fn get(&self, w: &Word) -> Option<&Matrix> {
        self.words.index_of(w).map(|i| &self.coeffs[i])
    }

    pub fn set(&mut self, w: &Word, mat: Matrix) -> Result<()> {
        let idx = self
            .words
            .index_of(w)
            .ok_or_else(|| MspError::InvalidArgument(format!("word {w} is not in the filter's word set")))?;
        if mat.shape() != (self.f_in, self.f_out) {
            return Err(MspError::Dimension(format!(
                "coefficient for {w} is {}x{}, expected {}x{}",
                mat.nrows(),
                mat.ncols(),
                self.f_in,
                self.f_out
            )));
        }
        self.coeffs[idx] = mat;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.coeffs.len() * self.f_in * self.f_out
    }

    pub fn to_json(&self) -> Result<String> {
        let coeffs = self
            .words()
            .iter()
            .zip(&self.coeffs)
            .map(|(w, c)| (w.clone(), to_rows(c)))
            .collect();
        let file = MimoFile { depth: self.words.max_len(), m: self.words.m(), f_in: self.f_in, f_out: self.f_out, coeffs };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Reads coefficients; the word set is exactly the stored keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MimoFile = serde_json::from_str(text)?;
        let words = Arc::new(WordSet::new(file.m, file.coeffs.keys().cloned().collect())?);
        let map = file
            .coeffs
            .iter()
            .map(|(w, rows)| Ok((w.clone(), from_rows(rows, file.f_in, file.f_out)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::from_map(words, file.f_in, file.f_out, &map)
    }
}

#[derive(Serialize, Deserialize)]
struct MimoFile {
    depth: usize,
    m: usize,
    f_in: usize,
    f_out: usize,
    coeffs: BTreeMap<Word, Vec<Vec<f64>>>,
}

pub(crate) fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(MspError::Dimension(format!("expected a {nrows}x{ncols} matrix")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// `Y = Σ_w Z_w F_w` where `Z_w` is `X` diffused along `w`.
pub fn apply_mimo(h: &MimoFilter, mg: &Multigraph, x: &MultiFeatureSignal) -> Result<MultiFeatureSignal> {
    if x.n_features() != h.f_in {
        return Err(MspError::Dimension(format!("filter expects {} features, signal has {}", h.f_in, x.n_features())));
    }
    if x.n_nodes() != mg.n_nodes() {
        return Err(MspError::Dimension(format!("{}-row signal on {} nodes", x.n_nodes(), mg.n_nodes())));
    }
    let diffused = diffuse(&h.words, &mg.matrices(), &x.values)?;
    MultiFeatureSignal::new(mix(&diffused, &h.coeffs, x.n_nodes(), h.f_out))
}

pub(crate) fn mix(diffused: &[Matrix], coeffs: &[Matrix], n: usize, f_out: usize) -> Matrix {
    let mut y = Matrix::zeros(n, f_out);
    for (z, f) in diffused.iter().zip(coeffs) {
        y.gemm(1.0, z, f, 1.0);
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub filter: MultigraphFilter,
    /// Sum of `|coefficient|` over product words longer than the cap.
    pub dropped_mass: f64,
}

/// Polynomial product `h1·h2` with word concatenation (`h1`'s word on the
/// left). The result lives on the unpruned tree of depth `depth_cap`.
pub fn compose_filters(h1: &MultigraphFilter, h2: &MultigraphFilter, depth_cap: usize) -> Result<Composition> {
    let m = h1.tree.m();
    if h2.tree.m() != m {
        return Err(MspError::Dimension(format!("composing filters over {m} and {} classes", h2.tree.m())));
    }
    let mut coeffs: BTreeMap<Word, f64> = BTreeMap::new();
    let mut dropped: BTreeMap<Word, f64> = BTreeMap::new();
    for (u, a) in &h1.coeffs {
        for (v, b) in &h2.coeffs {
            let w = u.concat(v);
            let target = if w.len() <= depth_cap { &mut coeffs } else { &mut dropped };
            *target.entry(w).or_insert(0.0) += a * b;
        }
    }
    coeffs.retain(|_, c| *c != 0.0);
    let tree = Arc::new(DiffusionTree::unpruned(m, depth_cap)?);
    Ok(Composition {
        filter: MultigraphFilter::new(tree, coeffs)?,
        dropped_mass: dropped.values().map(|c| c.abs()).sum(),
    })
}

/// `‖QH − HQ‖₂ ≤ tol` with `Q` the operator of `q` and `H` the dense filter.
pub fn is_shift_invariant(h: &MultigraphFilter, q: &Word, mg: &Multigraph, tol: f64) -> Result<bool> {
    let hm = h.dense_matrix(mg)?;
    let qm = word_operator(q, mg)?;
    Ok(linalg::spectral_norm(&linalg::commutator(&qm, &hm)) <= tol)
}
