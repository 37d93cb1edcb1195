//! Node selection plans, sampling matrices, pooled operators, multigraph
//! neighborhoods and neighborhood pooling.
//!
//! A plan relabels the nodes so that the nodes kept at layer `ℓ` are the
//! first `N_ℓ` labels. Node indices in this module are plan labels unless a
//! function says otherwise.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MspError, Result};
use crate::linalg::Matrix;
use crate::multigraph::{MultiFeatureSignal, Multigraph, Permutation};

/// Entries at or below this magnitude do not count as connections.
pub const NEIGHBOR_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Degree,
    Random,
    Coverage,
}

impl std::str::FromStr for SelectionMethod {
    type Err = MspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree" => Ok(Self::Degree),
            "random" => Ok(Self::Random),
            "coverage" => Ok(Self::Coverage),
            _ => Err(MspError::InvalidArgument(format!("unknown selection method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Median,
    Max,
}

impl std::str::FromStr for Aggregator {
    type Err = MspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            "max" => Ok(Self::Max),
            _ => Err(MspError::InvalidArgument(format!("unknown aggregator {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Hop reach per layer, indexed from layer 1.
    pub alpha: Vec<usize>,
    pub aggregator: Aggregator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    /// Plan label `i` is original node `node_order[i]`.
    node_order: Vec<usize>,
    /// `N₀ = N ≥ N₁ ≥ … ≥ N_L`.
    counts: Vec<usize>,
}

impl SelectionPlan {
    pub fn new(node_order: Vec<usize>, counts: Vec<usize>) -> Result<Self> {
        Permutation::new(node_order.clone())?;
        match counts.first() {
            Some(&n0) if n0 == node_order.len() => {}
            _ => return Err(MspError::InvalidArgument("first count must equal the node count".into())),
        }
        if counts.windows(2).any(|w| w[1] > w[0]) {
            return Err(MspError::InvalidArgument(format!("counts {counts:?} are not non-increasing")));
        }
        Ok(Self { node_order, counts })
    }

    /// Keeps every node at every layer, in the original order.
    pub fn full(n: usize, layers: usize) -> Self {
        Self { node_order: (0..n).collect(), counts: vec![n; layers + 1] }
    }

    pub fn node_order(&self) -> &[usize] {
        &self.node_order
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_layers(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn count(&self, layer: usize) -> usize {
        self.counts[layer]
    }

    pub fn permutation(&self) -> Permutation {
        Permutation::new(self.node_order.clone()).expect("validated at construction")
    }

    /// Original node ids kept at `layer`.
    pub fn selected(&self, layer: usize) -> &[usize] {
        &self.node_order[..self.counts[layer]]
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.n_layers() {
            return Err(MspError::OutOfRange(format!("layer {layer} outside 1..={}", self.n_layers())));
        }
        Ok(())
    }
}

/// `counts` lists `N₁, …, N_L`; `N₀` is the node count of `mg`.
pub fn select_nodes(mg: &Multigraph, counts: &[usize], method: SelectionMethod, seed: u64) -> Result<SelectionPlan> {
    let n = mg.n_nodes();
    let mut full = vec![n];
    full.extend_from_slice(counts);
    if let Some(&c) = counts.iter().find(|&&c| c > n) {
        return Err(MspError::InvalidArgument(format!("count {c} exceeds {n} nodes")));
    }
    if full.windows(2).any(|w| w[1] > w[0]) {
        return Err(MspError::InvalidArgument(format!("counts {counts:?} are not non-increasing")));
    }
    let order = match method {
        SelectionMethod::Degree => {
            let deg = total_degree(mg);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]).then(a.cmp(&b)));
            order
        }
        SelectionMethod::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        }
        SelectionMethod::Coverage => coverage_order(mg),
    };
    SelectionPlan::new(order, full)
}

fn total_degree(mg: &Multigraph) -> Vec<f64> {
    let n = mg.n_nodes();
    let mut deg = vec![0.0; n];
    for s in mg.matrices() {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    deg[i] += s[(i, j)].abs() + s[(j, i)].abs();
                }
            }
        }
    }
    deg
}

/// Undirected adjacency lists of the union of all class supports.
fn union_adjacency(mg: &Multigraph) -> Vec<Vec<usize>> {
    let n = mg.n_nodes();
    let mats = mg.matrices();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    j != i && mats.iter().any(|s| s[(i, j)].abs() > NEIGHBOR_THRESHOLD || s[(j, i)].abs() > NEIGHBOR_THRESHOLD)
                })
                .collect()
        })
        .collect()
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Greedy farthest-point order: start at the highest-degree node, then keep
/// adding the node whose hop distance to the chosen set is largest.
fn coverage_order(mg: &Multigraph) -> Vec<usize> {
    let n = mg.n_nodes();
    let adj = union_adjacency(mg);
    let deg = total_degree(mg);
    let first = (0..n).max_by(|&a, &b| deg[a].total_cmp(&deg[b]).then(b.cmp(&a))).expect("non-empty multigraph");
    let mut order = vec![first];
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut min_dist = bfs(&adj, first);
    while order.len() < n {
        let next = (0..n)
            .filter(|&v| !chosen[v])
            .max_by(|&a, &b| min_dist[a].cmp(&min_dist[b]).then(b.cmp(&a)))
            .expect("unchosen node remains");
        chosen[next] = true;
        order.push(next);
        for (d, e) in min_dist.iter_mut().zip(bfs(&adj, next)) {
            *d = (*d).min(e);
        }
    }
    order
}

/// Binary `D_ℓ` (`N_ℓ × N_{ℓ−1}`) and `E_ℓ` (`N_ℓ × N`) with ones on the
/// main diagonal.
pub fn sampling_matrices(plan: &SelectionPlan, layer: usize) -> Result<(Matrix, Matrix)> {
    plan.check_layer(layer)?;
    let nl = plan.count(layer);
    let d = Matrix::identity(nl, plan.count(layer - 1));
    let e = Matrix::identity(nl, plan.count(0));
    Ok((d, e))
}

/// Operators of `mg` relabeled into plan order.
pub fn plan_operators(plan: &SelectionPlan, mg: &Multigraph) -> Result<Vec<Matrix>> {
    if mg.n_nodes() != plan.count(0) {
        return Err(MspError::Dimension(format!("plan for {} nodes, multigraph has {}", plan.count(0), mg.n_nodes())));
    }
    let p = plan.permutation();
    Ok(mg.matrices().into_iter().map(|s| p.apply_matrix(s)).collect())
}

/// `S_{ℓ,g} = D_ℓ S_{ℓ−1,g} D_ℓᵀ` for every class, with `S_{0,g}` in plan order.
pub fn pooled_operators(plan: &SelectionPlan, mg: &Multigraph, layer: usize) -> Result<Vec<Matrix>> {
    if layer > plan.n_layers() {
        return Err(MspError::OutOfRange(format!("layer {layer} outside 0..={}", plan.n_layers())));
    }
    let mut ops = plan_operators(plan, mg)?;
    for l in 1..=layer {
        let (d, _) = sampling_matrices(plan, l)?;
        ops = ops.iter().map(|s| &d * s * d.transpose()).collect();
    }
    Ok(ops)
}

/// Layer-`(ℓ−1)` labels `j` with `[S_gᵏ]_{ij}` nonzero for some `k ≤ alpha`.
pub fn neighborhood(
    plan: &SelectionPlan,
    mg: &Multigraph,
    layer: usize,
    i: usize,
    class: usize,
    alpha: usize,
) -> Result<BTreeSet<usize>> {
    plan.check_layer(layer)?;
    if class >= mg.n_classes() {
        return Err(MspError::OutOfRange(format!("class {class} of {}", mg.n_classes())));
    }
    if i >= plan.count(layer) {
        return Err(MspError::OutOfRange(format!("node {i} not selected at layer {layer}")));
    }
    let s = plan.permutation().apply_matrix(mg.operator(class));
    Ok(reach(&s, i, alpha, plan.count(layer - 1)))
}

fn reach(s: &Matrix, i: usize, alpha: usize, limit: usize) -> BTreeSet<usize> {
    let n = s.nrows();
    let mut set = BTreeSet::from([i]);
    let mut row = Matrix::zeros(1, n);
    row[(0, i)] = 1.0;
    for _ in 0..alpha {
        row = &row * s;
        set.extend((0..limit).filter(|&j| row[(0, j)].abs() > NEIGHBOR_THRESHOLD));
    }
    set
}

pub fn multigraph_neighborhood(
    plan: &SelectionPlan,
    mg: &Multigraph,
    layer: usize,
    i: usize,
    alpha: usize,
) -> Result<BTreeSet<usize>> {
    let mut set = BTreeSet::new();
    for g in 0..mg.n_classes() {
        set.extend(neighborhood(plan, mg, layer, i, g, alpha)?);
    }
    Ok(set)
}

/// Multigraph neighborhoods of every node selected at `layer`.
pub fn layer_neighborhoods(plan: &SelectionPlan, mg: &Multigraph, layer: usize, alpha: usize) -> Result<Vec<Vec<usize>>> {
    plan.check_layer(layer)?;
    let ops = plan_operators(plan, mg)?;
    let limit = plan.count(layer - 1);
    Ok((0..plan.count(layer))
        .map(|i| {
            let mut set = BTreeSet::new();
            for s in &ops {
                set.extend(reach(s, i, alpha, limit));
            }
            set.into_iter().collect()
        })
        .collect())
}

/// Row `i` of the output aggregates rows `neighborhoods[i]` of `x`.
pub fn pool_signal(x: &MultiFeatureSignal, neighborhoods: &[Vec<usize>], agg: Aggregator) -> Result<MultiFeatureSignal> {
    MultiFeatureSignal::new(pool_matrix(&x.values, neighborhoods, agg)?)
}

pub(crate) fn pool_matrix(x: &Matrix, neighborhoods: &[Vec<usize>], agg: Aggregator) -> Result<Matrix> {
    check_neighborhoods(x.nrows(), neighborhoods)?;
    let f = x.ncols();
    let mut out = Matrix::zeros(neighborhoods.len(), f);
    for (i, nb) in neighborhoods.iter().enumerate() {
        for c in 0..f {
            out[(i, c)] = match agg {
                Aggregator::Mean => nb.iter().map(|&j| x[(j, c)]).sum::<f64>() / nb.len() as f64,
                Aggregator::Max => nb.iter().map(|&j| x[(j, c)]).fold(f64::NEG_INFINITY, f64::max),
                Aggregator::Median => median_weights(x, nb, c).iter().map(|&(j, w)| w * x[(j, c)]).sum(),
            };
        }
    }
    Ok(out)
}

/// Gradient of `pool_matrix` with respect to `x`, given the output gradient.
pub(crate) fn pool_backward(x: &Matrix, neighborhoods: &[Vec<usize>], agg: Aggregator, d_out: &Matrix) -> Matrix {
    let mut dx = Matrix::zeros(x.nrows(), x.ncols());
    for (i, nb) in neighborhoods.iter().enumerate() {
        for c in 0..x.ncols() {
            let g = d_out[(i, c)];
            match agg {
                Aggregator::Mean => {
                    let share = g / nb.len() as f64;
                    for &j in nb {
                        dx[(j, c)] += share;
                    }
                }
                Aggregator::Max => {
                    let arg = argmax(x, nb, c);
                    dx[(arg, c)] += g;
                }
                Aggregator::Median => {
                    for (j, w) in median_weights(x, nb, c) {
                        dx[(j, c)] += w * g;
                    }
                }
            }
        }
    }
    dx
}

/// First row attaining the maximum.
fn argmax(x: &Matrix, nb: &[usize], c: usize) -> usize {
    let mut best = nb[0];
    for &j in &nb[1..] {
        if x[(j, c)] > x[(best, c)] {
            best = j;
        }
    }
    best
}

/// Rows and weights whose weighted sum is the median (two halves when even).
fn median_weights(x: &Matrix, nb: &[usize], c: usize) -> Vec<(usize, f64)> {
    let mut sorted = nb.to_vec();
    sorted.sort_by(|&a, &b| x[(a, c)].total_cmp(&x[(b, c)]).then(a.cmp(&b)));
    let k = sorted.len();
    if k % 2 == 1 {
        vec![(sorted[k / 2], 1.0)]
    } else {
        vec![(sorted[k / 2 - 1], 0.5), (sorted[k / 2], 0.5)]
    }
}

fn check_neighborhoods(rows: usize, neighborhoods: &[Vec<usize>]) -> Result<()> {
    for (i, nb) in neighborhoods.iter().enumerate() {
        if nb.is_empty() {
            return Err(MspError::InvalidArgument(format!("neighborhood {i} is empty")));
        }
        if let Some(&j) = nb.iter().find(|&&j| j >= rows) {
            return Err(MspError::OutOfRange(format!("neighbor {j} of node {i} outside {rows} rows")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigraph::{build_shift_operator, OperatorKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn undirected(n: usize, edges: &[(usize, usize)]) -> Matrix {
        let mut s = Matrix::zeros(n, n);
        for &(a, b) in edges {
            s[(a, b)] = 1.0;
            s[(b, a)] = 1.0;
        }
        s
    }

    fn cycle(n: usize) -> Matrix {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        undirected(n, &edges)
    }

    fn path(n: usize) -> Matrix {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        undirected(n, &edges)
    }

    fn mg1(s: Matrix) -> Multigraph {
        Multigraph::from_matrices(vec![s]).unwrap()
    }

    fn hop_distance(s: &Matrix, a: usize, b: usize) -> usize {
        let adj: Vec<Vec<usize>> = (0..s.nrows()).map(|i| (0..s.nrows()).filter(|&j| s[(i, j)] != 0.0).collect()).collect();
        bfs(&adj, a)[b]
    }

    #[test]
    fn full_counts_give_identity_plan() {
        let mg = mg1(cycle(5));
        for method in [SelectionMethod::Degree, SelectionMethod::Random, SelectionMethod::Coverage] {
            let plan = select_nodes(&mg, &[5, 5], method, 3).unwrap();
            let ops = pooled_operators(&plan, &mg, 2).unwrap();
            // relabeling is a permutation; with every node kept the operator set is preserved
            let p = plan.permutation();
            assert_eq!(ops[0], p.apply_matrix(mg.operator(0)));
            if method != SelectionMethod::Random {
                assert_eq!(plan.counts(), &[5, 5, 5]);
            }
        }
        let full = SelectionPlan::full(5, 2);
        assert_eq!(pooled_operators(&full, &mg, 2).unwrap()[0], *mg.operator(0));
    }

    #[test]
    fn star_degree_picks_center() {
        let mg = mg1(undirected(5, &[(3, 0), (3, 1), (3, 2), (3, 4)]));
        let plan = select_nodes(&mg, &[1], SelectionMethod::Degree, 0).unwrap();
        assert_eq!(plan.selected(1), &[3]);
    }

    #[test]
    fn coverage_on_cycle_is_antipodal() {
        let s = cycle(6);
        let mg = mg1(s.clone());
        let plan = select_nodes(&mg, &[2], SelectionMethod::Coverage, 0).unwrap();
        let sel = plan.selected(1);
        let best = (0..6)
            .flat_map(|a| (a + 1..6).map(move |b| (a, b)))
            .map(|(a, b)| hop_distance(&s, a, b))
            .max()
            .unwrap();
        assert_eq!(best, 3);
        assert_eq!(hop_distance(&s, sel[0], sel[1]), best);
    }

    #[test]
    fn select_rejects_bad_counts() {
        let mg = mg1(cycle(4));
        assert!(select_nodes(&mg, &[2, 3], SelectionMethod::Degree, 0).is_err());
        assert!(select_nodes(&mg, &[5], SelectionMethod::Degree, 0).is_err());
    }

    #[test]
    fn sampling_matrix_examples() {
        let plan = SelectionPlan::new(vec![0, 1, 2, 3], vec![4, 4, 2]).unwrap();
        let (d1, _) = sampling_matrices(&plan, 1).unwrap();
        assert_eq!(d1, Matrix::identity(4, 4));
        let (d2, e2) = sampling_matrices(&plan, 2).unwrap();
        assert_eq!(d2, Matrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        assert_eq!(&d2 * d2.transpose(), Matrix::identity(2, 2));
        assert_eq!(e2.shape(), (2, 4));
        assert!(sampling_matrices(&plan, 0).is_err());
        let x = Matrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        assert_eq!(&d2 * &x, x.rows(0, 2).into_owned());
    }

    #[test]
    fn pooled_path_is_leading_submatrix() {
        let mg = mg1(path(3));
        let plan = SelectionPlan::new(vec![0, 1, 2], vec![3, 2]).unwrap();
        let ops = pooled_operators(&plan, &mg, 1).unwrap();
        assert_eq!(ops[0], mg.operator(0).view((0, 0), (2, 2)).into_owned());
    }

    #[test]
    fn pooled_operators_are_path_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 7;
        let mats = (0..2).map(|_| Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let mg = Multigraph::from_matrices(mats).unwrap();
        let plan = SelectionPlan::new(vec![3, 0, 6, 1, 5, 2, 4], vec![7, 5, 3]).unwrap();
        let two = pooled_operators(&plan, &mg, 2).unwrap();
        let sel = plan.selected(2);
        for (g, s) in two.iter().enumerate() {
            let direct = Matrix::from_fn(3, 3, |a, b| mg.operator(g)[(sel[a], sel[b])]);
            assert_eq!(*s, direct);
        }
    }

    #[test]
    fn neighborhood_examples() {
        let mg = mg1(cycle(4));
        let plan = SelectionPlan::full(4, 1);
        assert_eq!(neighborhood(&plan, &mg, 1, 2, 0, 0).unwrap(), BTreeSet::from([2]));
        assert_eq!(neighborhood(&plan, &mg, 1, 0, 0, 1).unwrap(), BTreeSet::from([0, 1, 3]));
    }

    #[test]
    fn neighborhood_matches_bfs_on_selection() {
        let s = path(6);
        let mg = mg1(s.clone());
        // layer 1 keeps {0, 2, 4}; layer 2 keeps {0, 2}
        let plan = SelectionPlan::new(vec![0, 2, 4, 1, 3, 5], vec![6, 3, 2]).unwrap();
        for i in 0..2 {
            let got: BTreeSet<usize> =
                neighborhood(&plan, &mg, 2, i, 0, 2).unwrap().iter().map(|&j| plan.node_order()[j]).collect();
            let origin = plan.node_order()[i];
            let oracle: BTreeSet<usize> =
                plan.selected(1).iter().copied().filter(|&v| hop_distance(&s, origin, v) <= 2).collect();
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn multigraph_neighborhood_examples() {
        let a = path(5);
        let b = build_shift_operator(5, &[(0, 4, 1.0), (4, 0, 1.0)], OperatorKind::Adjacency).unwrap().into_matrix();
        let single = mg1(a.clone());
        let plan = SelectionPlan::full(5, 1);
        assert_eq!(
            multigraph_neighborhood(&plan, &single, 1, 0, 1).unwrap(),
            neighborhood(&plan, &single, 1, 0, 0, 1).unwrap()
        );
        let mg = Multigraph::from_matrices(vec![a, b]).unwrap();
        let n0 = neighborhood(&plan, &mg, 1, 0, 0, 1).unwrap();
        let n1 = neighborhood(&plan, &mg, 1, 0, 1, 1).unwrap();
        let union = multigraph_neighborhood(&plan, &mg, 1, 0, 1).unwrap();
        assert_eq!(union, BTreeSet::from([0, 1, 4]));
        assert!(union.len() > n0.len() && union.len() > n1.len());
        assert_eq!(multigraph_neighborhood(&plan, &mg, 1, 3, 0).unwrap(), BTreeSet::from([3]));
    }

    #[test]
    fn pool_examples() {
        let x = MultiFeatureSignal::new(Matrix::from_row_slice(3, 2, &[1.0, 5.0, 3.0, -1.0, 2.0, 0.0])).unwrap();
        let singles = vec![vec![0], vec![2]];
        let pooled = pool_signal(&x, &singles, Aggregator::Median).unwrap();
        assert_eq!(pooled.values, Matrix::from_row_slice(2, 2, &[1.0, 5.0, 2.0, 0.0]));
        let mean = pool_signal(&x, &[vec![0, 1]], Aggregator::Mean).unwrap();
        assert_eq!(mean.values, Matrix::from_row_slice(1, 2, &[2.0, 2.0]));
        let c = MultiFeatureSignal::new(Matrix::from_element(4, 3, 0.7)).unwrap();
        let maxed = pool_signal(&c, &[vec![0, 1, 2], vec![3, 1]], Aggregator::Max).unwrap();
        assert!(maxed.values.iter().all(|&v| v == 0.7));
        let med = pool_signal(&x, &[vec![0, 1, 2]], Aggregator::Median).unwrap();
        assert_eq!(med.values, Matrix::from_row_slice(1, 2, &[2.0, 0.0]));
        assert!(pool_signal(&x, &[vec![]], Aggregator::Mean).is_err());
    }

    #[test]
    fn pool_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let nbs = vec![vec![0, 1, 2], vec![1, 3], vec![4, 0, 2, 3]];
        let d_out = Matrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        for agg in [Aggregator::Mean, Aggregator::Median, Aggregator::Max] {
            let dx = pool_backward(&x, &nbs, agg, &d_out);
            let h = 1e-6;
            for r in 0..5 {
                for c in 0..2 {
                    let mut xp = x.clone();
                    xp[(r, c)] += h;
                    let mut xm = x.clone();
                    xm[(r, c)] -= h;
                    let fp = pool_matrix(&xp, &nbs, agg).unwrap().dot(&d_out);
                    let fm = pool_matrix(&xm, &nbs, agg).unwrap().dot(&d_out);
                    assert!(((fp - fm) / (2.0 * h) - dx[(r, c)]).abs() < 1e-6, "{agg:?}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn plans_are_nested(seed in any::<u64>(), n1 in 1usize..9, drop in 0usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 9;
            let s = Matrix::from_fn(n, n, |_, _| if rng.gen_bool(0.3) { 1.0 } else { 0.0 });
            let mg = mg1(s);
            let n2 = n1.saturating_sub(drop).max(1);
            for method in [SelectionMethod::Degree, SelectionMethod::Random, SelectionMethod::Coverage] {
                let plan = select_nodes(&mg, &[n1, n2], method, seed).unwrap();
                let l1: BTreeSet<_> = plan.selected(1).iter().collect();
                prop_assert!(plan.selected(2).iter().all(|v| l1.contains(v)));
                for l in 1..=2 {
                    let (d, _) = sampling_matrices(&plan, l).unwrap();
                    prop_assert_eq!(&d * d.transpose(), Matrix::identity(plan.count(l), plan.count(l)));
                }
            }
        }

        #[test]
        fn neighborhood_monotone_in_alpha(seed in any::<u64>(), a in 0usize..4, extra in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 8;
            let mats = (0..2).map(|_| Matrix::from_fn(n, n, |_, _| if rng.gen_bool(0.2) { rng.gen_range(0.1..1.0) } else { 0.0 })).collect();
            let mg = Multigraph::from_matrices(mats).unwrap();
            let plan = select_nodes(&mg, &[6, 4], SelectionMethod::Random, seed).unwrap();
            for i in 0..4 {
                let small = multigraph_neighborhood(&plan, &mg, 2, i, a).unwrap();
                let big = multigraph_neighborhood(&plan, &mg, 2, i, a + extra).unwrap();
                prop_assert!(small.is_subset(&big));
                prop_assert!(small.contains(&i));
            }
        }

        #[test]
        fn pooling_is_permutation_covariant(seed in any::<u64>(), agg_idx in 0usize..3) {
            let agg = [Aggregator::Mean, Aggregator::Median, Aggregator::Max][agg_idx];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 7;
            let mats = (0..2).map(|_| Matrix::from_fn(n, n, |_, _| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })).collect();
            let mg = Multigraph::from_matrices(mats).unwrap();
            let x = Matrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
            let plan = select_nodes(&mg, &[4], SelectionMethod::Random, seed).unwrap();
            let nbs = layer_neighborhoods(&plan, &mg, 1, 2).unwrap();
            let xp = plan.permutation().apply_rows(&x);
            let pooled = pool_matrix(&xp, &nbs, agg).unwrap();

            // relabel the original nodes, then rebuild the plan on the relabeled multigraph
            let q = Permutation::random(n, &mut rng);
            let (mg2, x2) = crate::multigraph::permute(&mg, &MultiFeatureSignal::new(x).unwrap(), &q).unwrap();
            let inv = q.inverse();
            let order2: Vec<usize> = plan.node_order().iter().map(|&v| inv.as_slice()[v]).collect();
            let plan2 = SelectionPlan::new(order2, plan.counts().to_vec()).unwrap();
            let nbs2 = layer_neighborhoods(&plan2, &mg2, 1, 2).unwrap();
            prop_assert_eq!(&nbs, &nbs2);
            let pooled2 = pool_matrix(&plan2.permutation().apply_rows(&x2.values), &nbs2, agg).unwrap();
            prop_assert_eq!(pooled, pooled2);
        }
    }
}
