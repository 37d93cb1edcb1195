//! Monomials of the non-commutative filter algebra and the pruned,
//! depth-limited diffusion tree that enumerates them.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MspError, Result};
use crate::linalg::{self, Matrix};
use crate::multigraph::{commutator_norm, Multigraph};

/// Pruning cutoff used when pruning is requested without a value.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// A monomial `S_{w₀}·S_{w₁}···S_{w_{k−1}}`; the empty word is the identity.
///
/// Ordered by length, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn new(indices: Vec<usize>) -> Self {
        Word(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// The word without its leftmost (last applied) operator.
    pub fn suffix(&self) -> Option<Word> {
        (!self.0.is_empty()).then(|| Word(self.0[1..].to_vec()))
    }

    pub fn prepend(&self, index: usize) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(index);
        v.extend_from_slice(&self.0);
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Number of distinct operator indices.
    pub fn distinct(&self) -> usize {
        self.0.iter().collect::<BTreeSet<_>>().len()
    }

    /// Identity or a pure power `Sᵢᵏ`.
    pub fn is_homogeneous(&self) -> bool {
        self.distinct() <= 1
    }

    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("I");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for Word {
    type Err = MspError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "I" {
            return Ok(Word::identity());
        }
        s.split('-')
            .map(|p| p.parse::<usize>().map_err(|_| MspError::InvalidArgument(format!("bad word {s:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered pairs `(j, i)`: any word with `S_j` immediately followed by `S_i`
/// is excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedPairSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl PrunedPairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `(left, right)`; refuses a pair whose reverse is already present.
    pub fn insert(&mut self, left: usize, right: usize) -> Result<()> {
        if self.pairs.contains(&(right, left)) {
            return Err(MspError::InvalidArgument(format!(
                "cannot prune both ({left},{right}) and ({right},{left})"
            )));
        }
        self.pairs.insert((left, right));
        Ok(())
    }

    pub fn contains(&self, left: usize, right: usize) -> bool {
        self.pairs.contains(&(left, right))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pairs.iter()
    }

    pub fn admits(&self, word: &Word) -> bool {
        word.adjacent_pairs().all(|(a, b)| !self.contains(a, b))
    }
}

/// Canonically ordered, suffix-closed word list with suffix links, the
/// structure filters diffuse along.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSet {
    m: usize,
    words: Vec<Word>,
    suffix: Vec<Option<usize>>,
}

impl WordSet {
    /// Sorts the words and links each word to its suffix. The identity must be
    /// present and every nonempty word's suffix must be in the set.
    pub fn new(m: usize, mut words: Vec<Word>) -> Result<Self> {
        words.sort();
        words.dedup();
        if words.first().map(Word::is_identity) != Some(true) {
            return Err(MspError::InvalidArgument("word set must contain the identity".into()));
        }
        let mut suffix = Vec::with_capacity(words.len());
        for w in &words {
            if let Some(&bad) = w.indices().iter().find(|&&i| i >= m) {
                return Err(MspError::OutOfRange(format!("word {w} uses class {bad} of {m}")));
            }
            let link = match w.suffix() {
                None => None,
                Some(s) => Some(words.binary_search(&s).map_err(|_| {
                    MspError::InvalidArgument(format!("word {w} present without its suffix {s}"))
                })?),
            };
            suffix.push(link);
        }
        Ok(Self { m, words, suffix })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Index of `w[1..]` for each nonempty word.
    pub fn suffix_links(&self) -> &[Option<usize>] {
        &self.suffix
    }

    pub fn index_of(&self, w: &Word) -> Option<usize> {
        self.words.binary_search(w).ok()
    }

    pub fn max_len(&self) -> usize {
        self.words.last().map_or(0, Word::len)
    }

    /// The homogeneous subset: identity and pure powers.
    pub fn homogeneous(&self) -> WordSet {
        let words = self.words.iter().filter(|w| w.is_homogeneous()).cloned().collect();
        WordSet::new(self.m, words).expect("pure powers are suffix-closed")
    }

    /// Words using only the given class, relabeled to class 0.
    pub fn single_class(&self, class: usize) -> WordSet {
        let words = self
            .words
            .iter()
            .filter(|w| w.indices().iter().all(|&i| i == class))
            .map(|w| Word(vec![0; w.len()]))
            .collect();
        WordSet::new(1, words).expect("powers of one class are suffix-closed")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTree {
    depth: usize,
    epsilon: f64,
    pruned: PrunedPairSet,
    set: WordSet,
}

impl DiffusionTree {
    /// Tree for `m` classes with an explicit pruned-pair set.
    pub fn with_pruned(m: usize, depth: usize, epsilon: f64, pruned: PrunedPairSet) -> Result<Self> {
        if m == 0 {
            return Err(MspError::InvalidArgument("at least one class required".into()));
        }
        let mut words = vec![Word::identity()];
        let mut level = vec![Word::identity()];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(level.len() * m);
            for w in &level {
                for a in 0..m {
                    let blocked = w.indices().first().is_some_and(|&b| pruned.contains(a, b));
                    if !blocked {
                        next.push(w.prepend(a));
                    }
                }
            }
            words.extend(next.iter().cloned());
            level = next;
        }
        let set = WordSet::new(m, words)?;
        Ok(Self { depth, epsilon, pruned, set })
    }

    pub fn unpruned(m: usize, depth: usize) -> Result<Self> {
        Self::with_pruned(m, depth, f64::INFINITY, PrunedPairSet::new())
    }

    pub fn m(&self) -> usize {
        self.set.m
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn pruned(&self) -> &PrunedPairSet {
        &self.pruned
    }

    pub fn words(&self) -> &[Word] {
        &self.set.words
    }

    pub fn word_set(&self) -> &WordSet {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.set.index_of(w).is_some()
    }

    /// Number of words of each length `0..=depth`.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.depth + 1];
        for w in self.words() {
            counts[w.len()] += 1;
        }
        counts
    }
}

/// Enumerates every word of length `≤ depth` after pruning near-commuting
/// orderings: for each pair `i < j` with `‖[Sᵢ, Sⱼ]‖₂ ≤ ε`, words containing
/// `Sⱼ Sᵢ` adjacently are dropped and `Sᵢ Sⱼ` kept. `ε = ∞` disables pruning.
pub fn generate_pruned_tree(mg: &Multigraph, epsilon: f64, depth: usize) -> Result<DiffusionTree> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(MspError::InvalidArgument(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let m = mg.n_classes();
    let mut pruned = PrunedPairSet::new();
    if epsilon.is_finite() {
        if !mg.all_normalized() {
            log::warn!("pruning with unnormalized operators: the commutator bound assumes ‖Sᵢ‖₂ ≤ 1");
        }
        let ops = mg.operators();
        for i in 0..m {
            for j in (i + 1)..m {
                if commutator_norm(&ops[i], &ops[j]) <= epsilon {
                    pruned.insert(j, i)?;
                }
            }
        }
    }
    DiffusionTree::with_pruned(m, depth, epsilon, pruned)
}

/// Dense `S_{w₀}·S_{w₁}···`, the rightmost factor acting first.
pub fn word_operator(w: &Word, mg: &Multigraph) -> Result<Matrix> {
    word_matrix(w, &mg.matrices())
}

pub(crate) fn word_matrix(w: &Word, ops: &[&Matrix]) -> Result<Matrix> {
    let n = ops.first().map_or(0, |o| o.nrows());
    let mut acc = Matrix::identity(n, n);
    for &i in w.indices() {
        let op = ops
            .get(i)
            .ok_or_else(|| MspError::OutOfRange(format!("word {w} uses class {i} of {}", ops.len())))?;
        acc *= *op;
    }
    Ok(acc)
}

/// `‖L·[Sᵢ, Sⱼ]·R‖₂` with `L`, `R` the operators of `left` and `right`.
pub fn verify_pruning_bound(mg: &Multigraph, left: &Word, pair: (usize, usize), right: &Word) -> Result<f64> {
    if !mg.all_normalized() {
        return Err(MspError::InvalidArgument("pruning bound requires spectrally normalized operators".into()));
    }
    let (i, j) = pair;
    if i >= mg.n_classes() || j >= mg.n_classes() {
        return Err(MspError::OutOfRange(format!("pair ({i},{j}) with {} classes", mg.n_classes())));
    }
    let comm = linalg::commutator(mg.operator(i), mg.operator(j));
    let l = word_operator(left, mg)?;
    let r = word_operator(right, mg)?;
    Ok(linalg::spectral_norm(&(l * comm * r)))
}

/// Splits into identity plus pure powers, and the class-mixing remainder.
pub fn split_homogeneous(tree: &DiffusionTree) -> (Vec<Word>, Vec<Word>) {
    tree.words().iter().cloned().partition(Word::is_homogeneous)
}
