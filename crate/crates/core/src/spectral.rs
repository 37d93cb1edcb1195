//! Joint block diagonalization of a symmetric operator family and the
//! multigraph Fourier transform built on it.
//!
//! The decomposition comes from the commutant: a random symmetric `C` with
//! `C Sᵢ = Sᵢ C` for every operator is eigendecomposed, and its eigenspaces
//! (up to clustering of nearly equal eigenvalues) are the blocks.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MspError, Result};
use crate::filter::{apply_filter, MultigraphFilter};
use crate::linalg::{self, Matrix, Vector};
use crate::multigraph::{Multigraph, MultigraphSignal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JbdOptions {
    /// Eigenvalues of `C` closer than `cluster_gap · ρ(C)` share a block.
    pub cluster_gap: f64,
    /// Singular values below `null_tol · σ_max` span the commutant.
    pub null_tol: f64,
    /// Replace each operator by `(S + Sᵀ)/2` instead of rejecting it.
    pub symmetrize: bool,
    pub seed: u64,
}

impl Default for JbdOptions {
    fn default() -> Self {
        Self { cluster_gap: 1e-6, null_tol: 1e-9, symmetrize: false, seed: 0x0c0_ffee }
    }
}

/// Largest tolerated `|S − Sᵀ|` entry, relative to `max|S|`.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct JointBlockDecomposition {
    basis: Matrix,
    partition: Vec<usize>,
    offsets: Vec<usize>,
    /// `blocks[i][j]` is operator `i` restricted to block `j`.
    blocks: Vec<Vec<Matrix>>,
    commutant_dim: usize,
}

impl JointBlockDecomposition {
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn n_blocks(&self) -> usize {
        self.partition.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_operators(&self) -> usize {
        self.blocks.len()
    }

    /// Largest block size.
    pub fn max_block(&self) -> usize {
        self.partition.iter().copied().max().unwrap_or(0)
    }

    /// Dimension of the solution space of the commutant system.
    pub fn commutant_dim(&self) -> usize {
        self.commutant_dim
    }

    pub fn block(&self, operator: usize, j: usize) -> &Matrix {
        &self.blocks[operator][j]
    }

    /// Columns of `U` spanning block `j`.
    pub fn block_basis(&self, j: usize) -> Matrix {
        self.basis.columns(self.offsets[j], self.partition[j]).into_owned()
    }

    /// `U · blockdiag(Σ₁⁽ⁱ⁾, …, Σ_ℓ⁽ⁱ⁾) · Uᵀ`.
    pub fn reconstruct(&self, operator: usize) -> Matrix {
        let n = self.n_nodes();
        let mut d = Matrix::zeros(n, n);
        for (j, b) in self.blocks[operator].iter().enumerate() {
            let o = self.offsets[j];
            d.view_mut((o, o), (self.partition[j], self.partition[j])).copy_from(b);
        }
        &self.basis * d * self.basis.transpose()
    }

    /// `‖Sᵢ − reconstruction‖₂` for each operator of `mg`.
    pub fn reconstruction_errors(&self, mg: &Multigraph) -> Vec<f64> {
        (0..self.n_operators())
            .map(|i| linalg::spectral_norm(&(mg.operator(i) - self.reconstruct(i))))
            .collect()
    }
}

pub fn joint_block_diagonalize(mg: &Multigraph, options: &JbdOptions) -> Result<JointBlockDecomposition> {
    let n = mg.n_nodes();
    let mut ops = Vec::with_capacity(mg.n_classes());
    for (i, s) in mg.matrices().into_iter().enumerate() {
        let asym = linalg::asymmetry(s);
        if asym > SYMMETRY_TOL * s.amax().max(f64::MIN_POSITIVE) {
            if !options.symmetrize {
                return Err(MspError::NotSymmetric { index: i, asymmetry: asym });
            }
            ops.push((s + s.transpose()) * 0.5);
        } else {
            ops.push(s.clone());
        }
    }

    let null = commutant_basis(&ops, n, options.null_tol);
    let commutant_dim = null.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut c = Matrix::zeros(n, n);
    for b in &null {
        let coef: f64 = StandardNormal.sample(&mut rng);
        c += b * coef;
    }

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let radius = eig.eigenvalues.amax();
    let gap = options.cluster_gap * radius;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for &k in &order {
        let lam = eig.eigenvalues[k];
        match clusters.last_mut() {
            Some(cl) if lam - prev <= gap => cl.push(k),
            _ => clusters.push(vec![k]),
        }
        prev = lam;
    }

    struct Block {
        basis: Matrix,
        per_op: Vec<Matrix>,
    }
    let mut blocks: Vec<Block> = clusters
        .iter()
        .map(|cl| {
            let basis = Matrix::from_fn(n, cl.len(), |r, c| eig.eigenvectors[(r, cl[c])]);
            let per_op = ops.iter().map(|s| basis.transpose() * s * &basis).collect();
            Block { basis, per_op }
        })
        .collect();
    blocks.sort_by(|a, b| {
        b.basis
            .ncols()
            .cmp(&a.basis.ncols())
            .then_with(|| trace_first(&a.per_op).total_cmp(&trace_first(&b.per_op)))
    });

    let partition: Vec<usize> = blocks.iter().map(|b| b.basis.ncols()).collect();
    let mut offsets = Vec::with_capacity(partition.len());
    let mut acc = 0;
    for p in &partition {
        offsets.push(acc);
        acc += p;
    }
    let mut basis = Matrix::zeros(n, n);
    for (b, &o) in blocks.iter().zip(&offsets) {
        basis.columns_mut(o, b.basis.ncols()).copy_from(&b.basis);
    }
    let mut per_op: Vec<Vec<Matrix>> = vec![Vec::with_capacity(blocks.len()); ops.len()];
    for b in blocks {
        for (i, m) in b.per_op.into_iter().enumerate() {
            per_op[i].push(m);
        }
    }
    Ok(JointBlockDecomposition { basis, partition, offsets, blocks: per_op, commutant_dim })
}

fn trace_first(per_op: &[Matrix]) -> f64 {
    per_op.first().map(|m| m.trace()).unwrap_or(0.0)
}

/// Orthonormal basis (as symmetric matrices) of `{C = Cᵀ : C Sᵢ = Sᵢ C ∀i}`.
fn commutant_basis(ops: &[Matrix], n: usize, null_tol: f64) -> Vec<Matrix> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|p| (p..n).map(move |q| (p, q))).collect();
    let unit = |p: usize, q: usize| {
        let mut e = Matrix::zeros(n, n);
        if p == q {
            e[(p, p)] = 1.0;
        } else {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            e[(p, q)] = s;
            e[(q, p)] = s;
        }
        e
    };
    if ops.is_empty() {
        return pairs.iter().map(|&(p, q)| unit(p, q)).collect();
    }
    let rows = ops.len() * n * n;
    let mut a = Matrix::zeros(rows, pairs.len());
    for (col, &(p, q)) in pairs.iter().enumerate() {
        let e = unit(p, q);
        for (i, s) in ops.iter().enumerate() {
            let comm = &e * s - s * &e;
            a.view_mut((i * n * n, col), (n * n, 1)).copy_from_slice(comm.as_slice());
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= null_tol * smax)
        .map(|(k, _)| {
            let mut c = Matrix::zeros(n, n);
            for (col, &(p, q)) in pairs.iter().enumerate() {
                c += unit(p, q) * v_t[(k, col)];
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierComponents {
    pub components: Vec<Vector>,
}

impl FourierComponents {
    pub fn energy(&self) -> f64 {
        self.components.iter().map(|c| c.norm_squared()).sum()
    }
}

/// `x̂(j) = Uⱼᵀ x` for every block.
pub fn fourier_transform(jbd: &JointBlockDecomposition, x: &MultigraphSignal) -> Result<FourierComponents> {
    if x.len() != jbd.n_nodes() {
        return Err(MspError::Dimension(format!("signal of length {} for {} nodes", x.len(), jbd.n_nodes())));
    }
    let full = jbd.basis.transpose() * &x.values;
    let components = jbd
        .offsets
        .iter()
        .zip(&jbd.partition)
        .map(|(&o, &p)| full.rows(o, p).into_owned())
        .collect();
    Ok(FourierComponents { components })
}

/// `x = Σⱼ Uⱼ x̂(j)`.
pub fn inverse_fourier(jbd: &JointBlockDecomposition, comps: &FourierComponents) -> Result<MultigraphSignal> {
    if comps.components.len() != jbd.n_blocks()
        || comps.components.iter().zip(&jbd.partition).any(|(c, &p)| c.len() != p)
    {
        return Err(MspError::Dimension("components do not match the block partition".into()));
    }
    let mut stacked = Vector::zeros(jbd.n_nodes());
    for (c, &o) in comps.components.iter().zip(&jbd.offsets) {
        stacked.rows_mut(o, c.len()).copy_from(c);
    }
    Ok(MultigraphSignal::new(&jbd.basis * stacked))
}

/// The filter polynomial evaluated at each block's restricted operators.
pub fn filter_spectral_response(h: &MultigraphFilter, jbd: &JointBlockDecomposition) -> Result<Vec<Matrix>> {
    let set = h.tree().word_set();
    if set.m() > jbd.n_operators() {
        return Err(MspError::Dimension(format!(
            "filter over {} classes, decomposition of {} operators",
            set.m(),
            jbd.n_operators()
        )));
    }
    let mut out = Vec::with_capacity(jbd.n_blocks());
    for (j, &p) in jbd.partition.iter().enumerate() {
        let mut powers: Vec<Matrix> = Vec::with_capacity(set.len());
        let mut resp = Matrix::zeros(p, p);
        for (w, link) in set.words().iter().zip(set.suffix_links()) {
            let mw = match link {
                None => Matrix::identity(p, p),
                Some(parent) => &jbd.blocks[w.indices()[0]][j] * &powers[*parent],
            };
            let c = h.coeff(w);
            if c != 0.0 {
                resp += &mw * c;
            }
            powers.push(mw);
        }
        out.push(resp);
    }
    Ok(out)
}

/// `maxⱼ ‖ŷ(j) − H(Σⱼ) x̂(j)‖∞` with `y` the node-domain filter output.
pub fn verify_filtering_spectral_theorem(
    h: &MultigraphFilter,
    jbd: &JointBlockDecomposition,
    mg: &Multigraph,
    x: &MultigraphSignal,
    tol: f64,
) -> Result<f64> {
    let y = apply_filter(h, mg, x)?;
    let y_hat = fourier_transform(jbd, &y)?;
    let x_hat = fourier_transform(jbd, x)?;
    let resp = filter_spectral_response(h, jbd)?;
    let mut dev = 0.0f64;
    for ((yj, xj), hj) in y_hat.components.iter().zip(&x_hat.components).zip(&resp) {
        dev = dev.max((yj - hj * xj).amax());
    }
    if dev > tol {
        log::warn!("spectral theorem deviation {dev:e} exceeds {tol:e}");
    }
    Ok(dev)
}
