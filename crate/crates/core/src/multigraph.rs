//! Multigraphs as ordered families of dense shift operators on a shared node set.
//!
//! Diffusion convention: `z = S x` moves signal from column (source) to row
//! (destination), so an edge `src → dst` with weight `w` is stored at
//! `S[dst][src]`.

use serde::{Deserialize, Serialize};

use crate::error::{MspError, Result};
use crate::linalg::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Adjacency,
    Laplacian,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    matrix: Matrix,
    kind: OperatorKind,
    spectrally_normalized: bool,
}

impl ShiftOperator {
    /// Wraps a square matrix as a custom operator.
    pub fn custom(matrix: Matrix) -> Result<Self> {
        Self::with_kind(matrix, OperatorKind::Custom)
    }

    pub fn with_kind(matrix: Matrix, kind: OperatorKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(MspError::Dimension(format!(
                "shift operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !linalg::is_finite(&matrix) {
            return Err(MspError::NonFinite("shift operator entry".into()));
        }
        Ok(Self { matrix, kind, spectrally_normalized: false })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn is_spectrally_normalized(&self) -> bool {
        self.spectrally_normalized
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// Builds an operator from an edge list.
///
/// Adjacency: `M[dst][src] += weight`. Laplacian: `D − W` where `W` treats
/// every listed edge as undirected (`W = A + Aᵀ` off the diagonal).
pub fn build_shift_operator(
    n_nodes: usize,
    edges: &[(usize, usize, f64)],
    kind: OperatorKind,
) -> Result<ShiftOperator> {
    if n_nodes == 0 {
        return Err(MspError::InvalidArgument("n_nodes must be positive".into()));
    }
    let mut adj = Matrix::zeros(n_nodes, n_nodes);
    for (k, &(src, dst, w)) in edges.iter().enumerate() {
        if src >= n_nodes || dst >= n_nodes {
            return Err(MspError::OutOfRange(format!(
                "edge {k}: ({src}, {dst}) with {n_nodes} nodes"
            )));
        }
        if !w.is_finite() {
            return Err(MspError::NonFinite(format!("edge {k} weight {w}")));
        }
        adj[(dst, src)] += w;
    }
    let matrix = match kind {
        OperatorKind::Adjacency | OperatorKind::Custom => adj,
        OperatorKind::Laplacian => {
            let mut sym = &adj + adj.transpose();
            for i in 0..n_nodes {
                sym[(i, i)] = adj[(i, i)];
            }
            let mut lap = -sym.clone();
            for i in 0..n_nodes {
                let deg: f64 = sym.row(i).sum();
                lap[(i, i)] += deg;
            }
            lap
        }
    };
    Ok(ShiftOperator { matrix, kind, spectrally_normalized: false })
}

/// Divides by the largest singular value; zero operators pass through.
pub fn spectral_normalize(op: &ShiftOperator) -> ShiftOperator {
    let sigma = linalg::spectral_norm(&op.matrix);
    let matrix = if sigma > 0.0 { &op.matrix / sigma } else { op.matrix.clone() };
    ShiftOperator { matrix, kind: op.kind, spectrally_normalized: true }
}

/// `‖AB − BA‖₂`.
pub fn commutator_norm(a: &ShiftOperator, b: &ShiftOperator) -> f64 {
    linalg::spectral_norm(&linalg::commutator(&a.matrix, &b.matrix))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multigraph {
    n_nodes: usize,
    operators: Vec<ShiftOperator>,
}

impl Multigraph {
    pub fn new(operators: Vec<ShiftOperator>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| MspError::InvalidArgument("a multigraph needs at least one edge class".into()))?;
        let n_nodes = first.n_nodes();
        if n_nodes == 0 {
            return Err(MspError::InvalidArgument("a multigraph needs at least one node".into()));
        }
        for (i, op) in operators.iter().enumerate() {
            if op.n_nodes() != n_nodes {
                return Err(MspError::Dimension(format!(
                    "operator {i} is {}x{}, expected {n_nodes}x{n_nodes}",
                    op.n_nodes(),
                    op.n_nodes()
                )));
            }
        }
        Ok(Self { n_nodes, operators })
    }

    /// Convenience constructor from raw matrices (custom kind).
    pub fn from_matrices(matrices: Vec<Matrix>) -> Result<Self> {
        let ops = matrices.into_iter().map(ShiftOperator::custom).collect::<Result<Vec<_>>>()?;
        Self::new(ops)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_classes(&self) -> usize {
        self.operators.len()
    }

    pub fn operators(&self) -> &[ShiftOperator] {
        &self.operators
    }

    pub fn operator(&self, class: usize) -> &Matrix {
        &self.operators[class].matrix
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        self.operators.iter().map(|o| &o.matrix).collect()
    }

    pub fn spectrally_normalized(&self) -> Multigraph {
        Multigraph {
            n_nodes: self.n_nodes,
            operators: self.operators.iter().map(spectral_normalize).collect(),
        }
    }

    pub fn all_normalized(&self) -> bool {
        self.operators.iter().all(|o| o.spectrally_normalized)
    }

    /// Restricts to a subset of edge classes, in the given order.
    pub fn select_classes(&self, classes: &[usize]) -> Result<Multigraph> {
        let ops = classes
            .iter()
            .map(|&c| {
                self.operators
                    .get(c)
                    .cloned()
                    .ok_or_else(|| MspError::OutOfRange(format!("class {c} of {}", self.n_classes())))
            })
            .collect::<Result<Vec<_>>>()?;
        Multigraph::new(ops)
    }

    /// Leading principal submatrices on the first `n` nodes.
    pub fn leading_submultigraph(&self, n: usize) -> Result<Multigraph> {
        if n == 0 || n > self.n_nodes {
            return Err(MspError::OutOfRange(format!("{n} nodes of {}", self.n_nodes)));
        }
        let ops = self
            .operators
            .iter()
            .map(|o| ShiftOperator {
                matrix: o.matrix.view((0, 0), (n, n)).into_owned(),
                kind: o.kind,
                spectrally_normalized: o.spectrally_normalized,
            })
            .collect();
        Ok(Multigraph { n_nodes: n, operators: ops })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultigraphSignal {
    pub values: Vector,
}

impl MultigraphSignal {
    pub fn new(values: Vector) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: Vector::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `N × F` node features, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFeatureSignal {
    pub values: Matrix,
}

impl MultiFeatureSignal {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(MspError::Dimension("signals need at least one feature".into()));
        }
        Ok(Self { values })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }
}

impl From<MultigraphSignal> for MultiFeatureSignal {
    fn from(x: MultigraphSignal) -> Self {
        let n = x.values.len();
        Self { values: Matrix::from_column_slice(n, 1, x.values.as_slice()) }
    }
}

/// Node relabeling. Node `i` of the relabeled graph is node `perm[i]` of the
/// original, i.e. `x̂ = Pᵀx` and `Ŝ = PᵀSP` with `P[perm[i]][i] = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    perm: Vec<usize>,
}

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(MspError::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect() }
    }

    pub fn random<R: rand::Rng>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Self { perm: inv }
    }

    /// The single relabeling equal to applying `self` and then `next`.
    pub fn then(&self, next: &Permutation) -> Permutation {
        assert_eq!(self.len(), next.len());
        Permutation { perm: next.perm.iter().map(|&i| self.perm[i]).collect() }
    }

    /// `PᵀSP`.
    pub fn apply_matrix(&self, m: &Matrix) -> Matrix {
        let p = &self.perm;
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(p[i], p[j])])
    }

    /// `PᵀX` (row relabeling).
    pub fn apply_rows(&self, x: &Matrix) -> Matrix {
        let p = &self.perm;
        Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(p[i], j)])
    }
}

/// Consistently relabels a multigraph and a signal on it.
pub fn permute(
    mg: &Multigraph,
    x: &MultiFeatureSignal,
    p: &Permutation,
) -> Result<(Multigraph, MultiFeatureSignal)> {
    if p.len() != mg.n_nodes() || x.n_nodes() != mg.n_nodes() {
        return Err(MspError::Dimension(format!(
            "permutation of length {} for {} nodes and a {}-row signal",
            p.len(),
            mg.n_nodes(),
            x.n_nodes()
        )));
    }
    let ops = mg
        .operators
        .iter()
        .map(|o| ShiftOperator {
            matrix: p.apply_matrix(&o.matrix),
            kind: o.kind,
            spectrally_normalized: o.spectrally_normalized,
        })
        .collect();
    let perm_mg = Multigraph { n_nodes: mg.n_nodes, operators: ops };
    Ok((perm_mg, MultiFeatureSignal { values: p.apply_rows(&x.values) }))
}
