//! Regression trees over chromaticity features.
//!
//! Two kinds of tree share one node type:
//!
//! * multivariate trees ([`MvTree`]) whose leaves hold a whole chromaticity
//!   and whose splits minimize the summed distance measure of the two
//!   children, each child labeled by [`approx_minimize`];
//! * univariate trees ([`UvTree`]) fit with the squared-error loss and mean
//!   leaves, used by the independent-`r`/`g` baseline.
//!
//! Splits send `x[j] <= p` left and `x[j] > p` right. Candidate thresholds are
//! midpoints between consecutive distinct feature values. Instead of always
//! taking the cheapest split, the split is drawn uniformly from every
//! candidate whose cost is within `rand_pct` percent of the minimum, which is
//! how ensemble members are diversified.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chroma::{Chromaticity, DistanceMeasure, EPS_DIV};
use crate::error::{Error, Result};
use crate::minimize::{approx_minimize, exact_minimize};

/// A training example: feature vector plus ground-truth illuminant.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub truth: Chromaticity,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, truth: Chromaticity) -> Self {
        Self { features, truth }
    }
}

/// Tree node. Leaves carry the label and the number of training examples
/// that reached them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node<L> {
    Split {
        j: usize,
        p: f64,
        left: Box<Node<L>>,
        right: Box<Node<L>>,
    },
    Leaf {
        leaf: L,
        count: usize,
    },
}

impl<L> Node<L> {
    /// Descends to the leaf reached by `features`.
    pub fn leaf_for(&self, features: &[f64]) -> &L {
        let mut node = self;
        loop {
            match node {
                Node::Split { j, p, left, right } => {
                    node = if features[*j] <= *p { left } else { right };
                }
                Node::Leaf { leaf, .. } => return leaf,
            }
        }
    }

    /// Internal plus leaf nodes.
    pub fn node_count(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
            Node::Leaf { .. } => 1,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
            Node::Leaf { .. } => 1,
        }
    }

    /// Number of levels; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            Node::Leaf { .. } => 1,
        }
    }

    /// Sum of the leaf counts, i.e. the training set size.
    pub fn total_count(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => left.total_count() + right.total_count(),
            Node::Leaf { count, .. } => *count,
        }
    }

    /// Largest feature index tested anywhere in the tree.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Split { j, left, right, .. } => Some(
                (*j).max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
            Node::Leaf { .. } => None,
        }
    }
}

/// A fitted tree together with the feature dimension it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<L> {
    pub root: Node<L>,
    pub n_features: usize,
}

impl<L: Copy> Tree<L> {
    pub fn predict(&self, features: &[f64]) -> Result<L> {
        if features.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: features.len(),
            });
        }
        Ok(*self.root.leaf_for(features))
    }
}

pub type MvTree = Tree<Chromaticity>;
pub type UvTree = Tree<f64>;

/// Tree growing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Nodes with fewer examples become leaves.
    pub min_parent_size: usize,
    /// Every child of a split holds at least this many examples.
    pub min_leaf_size: usize,
    /// Multivariate nodes whose average error is at or below this become
    /// leaves. Compared in degrees for the angular measures and in
    /// hundredths for the others (see [`DistanceMeasure::threshold_scale`]).
    pub error_threshold: f64,
    /// Splits within this percentage of the cheapest are drawn at random.
    pub rand_pct: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            min_parent_size: 10,
            min_leaf_size: 1,
            error_threshold: 0.5,
            rand_pct: 10.0,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf_size == 0 {
            return Err(Error::InvalidParams("min_leaf_size must be at least 1".into()));
        }
        if self.min_parent_size < 2 * self.min_leaf_size {
            return Err(Error::InvalidParams(format!(
                "min_parent_size ({}) must be at least twice min_leaf_size ({})",
                self.min_parent_size, self.min_leaf_size
            )));
        }
        if !(self.error_threshold.is_finite() && self.error_threshold >= 0.0) {
            return Err(Error::InvalidParams("error_threshold must be finite and >= 0".into()));
        }
        if !(self.rand_pct.is_finite() && self.rand_pct >= 0.0) {
            return Err(Error::InvalidParams("rand_pct must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One candidate split of a feature: threshold plus the induced partition
/// (indices into the example slice).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSplit {
    pub threshold: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// A chosen split and its cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub cost: f64,
}

/// Midpoint thresholds between consecutive distinct values of feature `j`,
/// keeping only partitions whose sides both hold `min_leaf_size` examples.
pub fn enumerate_splits(examples: &[LabeledExample], j: usize, min_leaf_size: usize) -> Vec<CandidateSplit> {
    let values: Vec<f64> = examples.iter().map(|e| e.features[j]).collect();
    let order = sorted_order(&values, &(0..values.len()).collect::<Vec<_>>());
    boundaries(&values, &order, min_leaf_size)
        .map(|(k, threshold)| {
            let mut left = order[..k].to_vec();
            let mut right = order[k..].to_vec();
            left.sort_unstable();
            right.sort_unstable();
            CandidateSplit { threshold, left, right }
        })
        .collect()
}

fn sorted_order(values: &[f64], idx: &[usize]) -> Vec<usize> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// `(k, threshold)` for every admissible cut between `order[k - 1]` and
/// `order[k]`.
fn boundaries<'a>(values: &'a [f64], order: &'a [usize], min_leaf: usize) -> impl Iterator<Item = (usize, f64)> + 'a {
    let n = order.len();
    (min_leaf.max(1)..=n.saturating_sub(min_leaf.max(1))).filter_map(move |k| {
        let lo = values[order[k - 1]];
        let hi = values[order[k]];
        (lo < hi).then(|| (k, lo + 0.5 * (hi - lo)))
    })
}

/// Picks the split: the first cheapest when `rand_pct == 0`, otherwise a
/// uniform draw from the candidates within the margin. `candidates` must be
/// ordered by `(feature, threshold)`.
fn choose<R: Rng + ?Sized>(candidates: &[SplitChoice], rand_pct: f64, rng: &mut R) -> Option<SplitChoice> {
    let min = candidates.iter().map(|c| c.cost).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    if rand_pct == 0.0 {
        return candidates.iter().find(|c| c.cost == min).copied();
    }
    let limit = min * (1.0 + rand_pct / 100.0);
    let pool: Vec<&SplitChoice> = candidates.iter().filter(|c| c.cost <= limit).collect();
    Some(*pool[rng.random_range(0..pool.len())])
}

/// How child labels (and hence split costs) of multivariate trees are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafSolver {
    /// Median then normalize.
    #[default]
    Approx,
    /// Numerical minimizer; slow, for verification only.
    Exact,
}

// Sorted copies of the three truth components of one side of a split.
#[derive(Default)]
struct SortedColumns {
    cols: [Vec<f64>; 3],
}

impl SortedColumns {
    fn insert(&mut self, v: [f64; 3]) {
        for (col, x) in self.cols.iter_mut().zip(v) {
            let at = col.partition_point(|y| *y < x);
            col.insert(at, x);
        }
    }

    fn remove(&mut self, v: [f64; 3]) {
        for (col, x) in self.cols.iter_mut().zip(v) {
            let at = col.partition_point(|y| *y < x);
            col.remove(at);
        }
    }

    fn median(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, col) in out.iter_mut().zip(&self.cols) {
            let n = col.len();
            *o = if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            };
        }
        out
    }
}

struct MvProblem<'a> {
    examples: &'a [LabeledExample],
    truths: Vec<[f64; 3]>,
    measure: DistanceMeasure,
    solver: LeafSolver,
}

impl<'a> MvProblem<'a> {
    fn new(examples: &'a [LabeledExample], measure: DistanceMeasure, solver: LeafSolver) -> Self {
        Self {
            examples,
            truths: examples.iter().map(|e| e.truth.as_array()).collect(),
            measure,
            solver,
        }
    }

    fn subset(&self, idx: &[usize]) -> Vec<Chromaticity> {
        idx.iter().map(|&i| self.examples[i].truth).collect()
    }

    /// Label and minimized cost of a set of examples.
    fn label(&self, idx: &[usize]) -> Result<(Chromaticity, f64)> {
        let targets = self.subset(idx);
        let res = match self.solver {
            LeafSolver::Approx => approx_minimize(&targets, &self.measure)?,
            LeafSolver::Exact => exact_minimize(&targets, &self.measure)?,
        };
        Ok((res.estimate, res.cost))
    }

    // Cost of one side given its componentwise median; infinite when the
    // median cannot serve as an estimate.
    fn median_side_cost(&self, median: [f64; 3], members: &[usize]) -> f64 {
        let sum = median[0] + median[1] + median[2];
        if sum <= 0.0 {
            return f64::INFINITY;
        }
        let est = [median[0] / sum, median[1] / sum, median[2] / sum];
        if matches!(self.measure, DistanceMeasure::Reproduction) && est.iter().any(|c| *c < EPS_DIV) {
            return f64::INFINITY;
        }
        members.iter().map(|&i| self.measure.eval(&est, &self.truths[i])).sum()
    }

    fn candidates(&self, idx: &[usize], min_leaf: usize) -> Result<Vec<SplitChoice>> {
        let n_features = self.examples[idx[0]].features.len();
        let mut out = Vec::new();
        let mut values = vec![0.0; self.examples.len()];
        for j in 0..n_features {
            for &i in idx {
                values[i] = self.examples[i].features[j];
            }
            let order = sorted_order(&values, idx);
            match self.solver {
                LeafSolver::Approx => {
                    let mut left = SortedColumns::default();
                    let mut right = SortedColumns::default();
                    for &i in &order {
                        right.insert(self.truths[i]);
                    }
                    let mut moved = 0;
                    for (k, threshold) in boundaries(&values, &order, min_leaf) {
                        while moved < k {
                            let t = self.truths[order[moved]];
                            right.remove(t);
                            left.insert(t);
                            moved += 1;
                        }
                        let cost = self.median_side_cost(left.median(), &order[..k])
                            + self.median_side_cost(right.median(), &order[k..]);
                        out.push(SplitChoice { feature: j, threshold, cost });
                    }
                }
                LeafSolver::Exact => {
                    for (k, threshold) in boundaries(&values, &order, min_leaf) {
                        let cost = self.label(&order[..k])?.1 + self.label(&order[k..])?.1;
                        out.push(SplitChoice { feature: j, threshold, cost });
                    }
                }
            }
        }
        Ok(out)
    }
}

// Slack for "the split does not increase the node cost".
fn improvement_slack(solver: LeafSolver) -> f64 {
    match solver {
        LeafSolver::Approx => 1e-9,
        LeafSolver::Exact => 1e-6,
    }
}

/// Best (or randomized near-best) split of a multivariate node, using the
/// median approximation for both children.
///
/// Returns `None` when no admissible split exists or when no split lowers
/// the node's cost.
pub fn best_split_mv<R: Rng + ?Sized>(
    examples: &[LabeledExample],
    m: &DistanceMeasure,
    params: &FitParams,
    rng: &mut R,
) -> Result<Option<SplitChoice>> {
    best_split_mv_with(examples, m, params, LeafSolver::Approx, rng)
}

/// [`best_split_mv`] with a selectable child solver.
pub fn best_split_mv_with<R: Rng + ?Sized>(
    examples: &[LabeledExample],
    m: &DistanceMeasure,
    params: &FitParams,
    solver: LeafSolver,
    rng: &mut R,
) -> Result<Option<SplitChoice>> {
    if examples.is_empty() {
        return Err(Error::EmptySet);
    }
    let problem = MvProblem::new(examples, *m, solver);
    let idx: Vec<usize> = (0..examples.len()).collect();
    let parent = problem.label(&idx)?.1;
    split_node(&problem, &idx, parent, params, rng)
}

fn split_node<R: Rng + ?Sized>(
    problem: &MvProblem<'_>,
    idx: &[usize],
    parent_cost: f64,
    params: &FitParams,
    rng: &mut R,
) -> Result<Option<SplitChoice>> {
    let slack = improvement_slack(problem.solver);
    let mut candidates = problem.candidates(idx, params.min_leaf_size)?;
    candidates.retain(|c| c.cost <= parent_cost + slack);
    Ok(choose(&candidates, params.rand_pct, rng))
}

/// Grows a multivariate tree top-down.
///
/// A node becomes a leaf when it holds fewer than `min_parent_size`
/// examples, when its average error is at most `error_threshold`, or when no
/// admissible split lowers its cost.
pub fn fit_mv<R: Rng + ?Sized>(
    examples: &[LabeledExample],
    m: &DistanceMeasure,
    params: &FitParams,
    rng: &mut R,
) -> Result<MvTree> {
    fit_mv_with(examples, m, params, LeafSolver::Approx, rng)
}

/// [`fit_mv`] with a selectable child solver.
pub fn fit_mv_with<R: Rng + ?Sized>(
    examples: &[LabeledExample],
    m: &DistanceMeasure,
    params: &FitParams,
    solver: LeafSolver,
    rng: &mut R,
) -> Result<MvTree> {
    params.validate()?;
    let n_features = check_rows(examples.iter().map(|e| e.features.as_slice()))?;
    let problem = MvProblem::new(examples, *m, solver);
    let idx: Vec<usize> = (0..examples.len()).collect();
    let root = grow_mv(&problem, idx, params, rng)?;
    Ok(Tree { root, n_features })
}

fn grow_mv<R: Rng + ?Sized>(
    problem: &MvProblem<'_>,
    idx: Vec<usize>,
    params: &FitParams,
    rng: &mut R,
) -> Result<Node<Chromaticity>> {
    let (estimate, cost) = problem.label(&idx)?;
    let count = idx.len();
    let leaf = Node::Leaf { leaf: estimate, count };
    if count < params.min_parent_size || cost / count as f64 * problem.measure.threshold_scale() <= params.error_threshold {
        return Ok(leaf);
    }
    let Some(split) = split_node(problem, &idx, cost, params, rng)? else {
        return Ok(leaf);
    };
    let (left, right) = partition(&idx, |i| problem.examples[i].features[split.feature] <= split.threshold);
    Ok(Node::Split {
        j: split.feature,
        p: split.threshold,
        left: Box::new(grow_mv(problem, left, params, rng)?),
        right: Box::new(grow_mv(problem, right, params, rng)?),
    })
}

/// Descends `tree` with `features`.
pub fn predict_mv(tree: &MvTree, features: &[f64]) -> Result<Chromaticity> {
    tree.predict(features)
}

fn partition(idx: &[usize], goes_left: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
    idx.iter().partition(|&&i| goes_left(i))
}

fn check_rows<'a>(mut rows: impl Iterator<Item = &'a [f64]>) -> Result<usize> {
    let first = rows.next().ok_or(Error::EmptySet)?;
    let dim = first.len();
    for row in rows {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
    }
    Ok(dim)
}

struct UvProblem<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    features: &'a [usize],
}

impl UvProblem<'_> {
    fn mean_and_sse(&self, idx: &[usize]) -> (f64, f64) {
        let n = idx.len() as f64;
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n;
        let sse = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        (mean, sse)
    }

    fn candidates(&self, idx: &[usize], min_leaf: usize) -> Vec<SplitChoice> {
        // Responses are centered on the node mean before the running sums.
        let (mean, _) = self.mean_and_sse(idx);
        let mut values = vec![0.0; self.rows.len()];
        let mut out = Vec::new();
        for &j in self.features {
            for &i in idx {
                values[i] = self.rows[i][j];
            }
            let order = sorted_order(&values, idx);
            let centered: Vec<f64> = order.iter().map(|&i| self.y[i] - mean).collect();
            let (total, total_sq) = centered
                .iter()
                .fold((0.0, 0.0), |(s, q), &d| (s + d, q + d * d));
            let mut moved = 0;
            let (mut s, mut q) = (0.0, 0.0);
            for (k, threshold) in boundaries(&values, &order, min_leaf) {
                while moved < k {
                    s += centered[moved];
                    q += centered[moved] * centered[moved];
                    moved += 1;
                }
                let nl = k as f64;
                let nr = (order.len() - k) as f64;
                let left = (q - s * s / nl).max(0.0);
                let right = ((total_sq - q) - (total - s).powi(2) / nr).max(0.0);
                out.push(SplitChoice { feature: j, threshold, cost: left + right });
            }
        }
        out
    }
}

/// Grows a squared-error regression tree on scalar responses using every
/// feature column.
pub fn fit_uv<R: Rng + ?Sized>(rows: &[Vec<f64>], responses: &[f64], params: &FitParams, rng: &mut R) -> Result<UvTree> {
    let dim = rows.first().map_or(0, Vec::len);
    let features: Vec<usize> = (0..dim).collect();
    fit_uv_on(rows, responses, &features, params, rng)
}

/// [`fit_uv`] restricted to the listed feature columns. Split indices refer
/// to positions in the full rows.
///
/// Only `min_parent_size` and `min_leaf_size` stop growth; the error
/// threshold does not apply. Nodes whose responses are all equal also stop.
pub fn fit_uv_on<R: Rng + ?Sized>(
    rows: &[Vec<f64>],
    responses: &[f64],
    features: &[usize],
    params: &FitParams,
    rng: &mut R,
) -> Result<UvTree> {
    params.validate()?;
    let n_features = check_rows(rows.iter().map(Vec::as_slice))?;
    if responses.len() != rows.len() {
        return Err(Error::Dimension {
            expected: rows.len(),
            got: responses.len(),
        });
    }
    if let Some(&bad) = features.iter().find(|&&j| j >= n_features) {
        return Err(Error::Dimension {
            expected: n_features,
            got: bad + 1,
        });
    }
    let problem = UvProblem { rows, y: responses, features };
    let root = grow_uv(&problem, (0..rows.len()).collect(), params, rng);
    Ok(Tree { root, n_features })
}

fn grow_uv<R: Rng + ?Sized>(problem: &UvProblem<'_>, idx: Vec<usize>, params: &FitParams, rng: &mut R) -> Node<f64> {
    let (mean, sse) = problem.mean_and_sse(&idx);
    let leaf = Node::Leaf {
        leaf: mean,
        count: idx.len(),
    };
    let constant = idx.iter().all(|&i| problem.y[i] == problem.y[idx[0]]);
    if idx.len() < params.min_parent_size || constant {
        return leaf;
    }
    let mut candidates = problem.candidates(&idx, params.min_leaf_size);
    candidates.retain(|c| c.cost <= sse + 1e-12 * (1.0 + sse));
    let Some(split) = choose(&candidates, params.rand_pct, rng) else {
        return leaf;
    };
    let (left, right) = partition(&idx, |i| problem.rows[i][split.feature] <= split.threshold);
    Node::Split {
        j: split.feature,
        p: split.threshold,
        left: Box::new(grow_uv(problem, left, params, rng)),
        right: Box::new(grow_uv(problem, right, params, rng)),
    }
}

pub fn predict_uv(tree: &UvTree, features: &[f64]) -> Result<f64> {
    tree.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chroma::{distance, normalize};
    use crate::minimize::total_cost;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(r: f64, g: f64, b: f64) -> Chromaticity {
        Chromaticity::new(r, g, b).unwrap()
    }

    fn ex(features: &[f64], truth: Chromaticity) -> LabeledExample {
        LabeledExample::new(features.to_vec(), truth)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn greedy() -> FitParams {
        FitParams {
            rand_pct: 0.0,
            ..FitParams::default()
        }
    }

    fn random_dataset(seed: u64, n: usize, m: usize) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r: f64 = rng.random_range(0.2..0.5);
                let g: f64 = rng.random_range(0.35..0.5);
                let truth = normalize([r, g, (1.0 - r - g).max(0.05)]).unwrap();
                let features = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
                LabeledExample::new(features, truth)
            })
            .collect()
    }

    #[test]
    fn enumerate_splits_examples() {
        let t = Chromaticity::gray();
        let two = [ex(&[0.3], t), ex(&[0.1], t)];
        let splits = enumerate_splits(&two, 0, 1);
        assert_eq!(splits.len(), 1);
        assert!((splits[0].threshold - 0.2).abs() < 1e-15);
        assert_eq!(splits[0].left, vec![1]);
        assert_eq!(splits[0].right, vec![0]);

        let flat = [ex(&[0.5], t), ex(&[0.5], t), ex(&[0.5], t)];
        assert!(enumerate_splits(&flat, 0, 1).is_empty());

        let three = [ex(&[0.1], t), ex(&[0.2], t), ex(&[0.4], t)];
        let splits = enumerate_splits(&three, 0, 1);
        let thresholds: Vec<f64> = splits.iter().map(|s| s.threshold).collect();
        assert!((thresholds[0] - 0.15).abs() < 1e-15 && (thresholds[1] - 0.3).abs() < 1e-15);
        assert_eq!((splits[0].left.clone(), splits[0].right.clone()), (vec![0], vec![1, 2]));
        assert_eq!((splits[1].left.clone(), splits[1].right.clone()), (vec![0, 1], vec![2]));

        // min_leaf_size excludes lopsided cuts.
        assert!(enumerate_splits(&three, 0, 2).is_empty());
    }

    #[test]
    fn separable_pair_has_zero_split_cost() {
        let data = [ex(&[0.1, 0.5], c(0.45, 0.35, 0.2)), ex(&[0.9, 0.5], c(0.25, 0.35, 0.4))];
        let params = FitParams {
            min_parent_size: 2,
            ..greedy()
        };
        let s = best_split_mv(&data, &DistanceMeasure::Recovery, &params, &mut rng())
            .unwrap()
            .unwrap();
        assert_eq!(s.feature, 0);
        assert!(s.cost.abs() < 1e-5);
    }

    // Exhaustive re-evaluation: every feature, every midpoint, both sides
    // solved from scratch with approx_minimize.
    fn brute_force_mv(data: &[LabeledExample], m: &DistanceMeasure, min_leaf: usize) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..data[0].features.len() {
            let mut vals: Vec<f64> = data.iter().map(|e| e.features[j]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let p = w[0] + 0.5 * (w[1] - w[0]);
                let (l, r): (Vec<_>, Vec<_>) = data.iter().partition(|e| e.features[j] <= p);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let lt: Vec<Chromaticity> = l.iter().map(|e| e.truth).collect();
                let rt: Vec<Chromaticity> = r.iter().map(|e| e.truth).collect();
                let cost = approx_minimize(&lt, m).unwrap().cost + approx_minimize(&rt, m).unwrap().cost;
                if best.is_none_or(|b| cost < b.2) {
                    best = Some((j, p, cost));
                }
            }
        }
        best
    }

    #[test]
    fn greedy_split_matches_brute_force() {
        for seed in 0..30 {
            let data = random_dataset(seed, 20, 4);
            for m in DistanceMeasure::ALL {
                let got = best_split_mv(&data, &m, &greedy(), &mut rng()).unwrap().unwrap();
                let (_, _, cost) = brute_force_mv(&data, &m, 1).unwrap();
                assert!((got.cost - cost).abs() < 1e-9, "{m} seed {seed}");
                // Ties are possible (taxicab especially), so re-score the
                // chosen split instead of comparing positions.
                let (l, r): (Vec<_>, Vec<_>) =
                    data.iter().partition(|e| e.features[got.feature] <= got.threshold);
                let lt: Vec<Chromaticity> = l.iter().map(|e| e.truth).collect();
                let rt: Vec<Chromaticity> = r.iter().map(|e| e.truth).collect();
                let own = approx_minimize(&lt, &m).unwrap().cost + approx_minimize(&rt, &m).unwrap().cost;
                assert!((own - cost).abs() < 1e-9, "{m} seed {seed}");
            }
        }
    }

    #[test]
    fn randomized_split_stays_within_margin() {
        let data = random_dataset(5, 40, 6);
        let params = FitParams {
            rand_pct: 10.0,
            ..FitParams::default()
        };
        let (_, _, best) = brute_force_mv(&data, &DistanceMeasure::Recovery, 1).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..50 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let s = best_split_mv(&data, &DistanceMeasure::Recovery, &params, &mut r).unwrap().unwrap();
            assert!(s.cost <= best * 1.1 + 1e-12);
            seen.insert((s.feature, s.threshold.to_bits()));
        }
        assert!(seen.len() > 1, "randomization never varied the split");
    }

    #[test]
    fn uniform_truth_gives_single_leaf() {
        let t = c(0.4, 0.4, 0.2);
        let data: Vec<_> = (0..30).map(|i| ex(&[i as f64 / 30.0], t)).collect();
        let tree = fit_mv(&data, &DistanceMeasure::Recovery, &FitParams::default(), &mut rng()).unwrap();
        assert_eq!(tree.root, Node::Leaf { leaf: t, count: 30 });
    }

    #[test]
    fn single_example_is_a_leaf() {
        let t = c(0.4, 0.4, 0.2);
        let tree = fit_mv(&[ex(&[0.5], t)], &DistanceMeasure::Euclidean, &FitParams::default(), &mut rng()).unwrap();
        assert_eq!(tree.root, Node::Leaf { leaf: t, count: 1 });
        assert!(matches!(
            fit_mv(&[], &DistanceMeasure::Euclidean, &FitParams::default(), &mut rng()),
            Err(Error::EmptySet)
        ));
    }

    fn two_clusters() -> Vec<LabeledExample> {
        let a = c(0.45, 0.35, 0.20);
        let b = c(0.25, 0.35, 0.40);
        (0..24)
            .map(|i| {
                let x = i as f64 / 24.0;
                let noise = (i % 5) as f64 / 100.0;
                ex(&[x, noise], if x < 0.5 { a } else { b })
            })
            .collect()
    }

    #[test]
    fn two_cluster_dataset_gives_depth_one_tree() {
        let data = two_clusters();
        let tree = fit_mv(&data, &DistanceMeasure::Recovery, &FitParams::default(), &mut rng()).unwrap();
        // Only the cut between 11/24 and 12/24 separates the clusters, and
        // it has zero cost; every other cut leaves mixed children.
        let Node::Split { j, p, left, right } = &tree.root else {
            panic!("expected a split, got {:?}", tree.root)
        };
        assert_eq!(*j, 0);
        assert!((p - 23.0 / 48.0).abs() < 1e-12);
        assert_eq!(**left, Node::Leaf { leaf: c(0.45, 0.35, 0.20), count: 12 });
        assert_eq!(**right, Node::Leaf { leaf: c(0.25, 0.35, 0.40), count: 12 });

        assert_eq!(predict_mv(&tree, &[0.2, 0.0]).unwrap(), c(0.45, 0.35, 0.20));
        assert_eq!(predict_mv(&tree, &[0.8, 0.0]).unwrap(), c(0.25, 0.35, 0.40));
        assert!(matches!(predict_mv(&tree, &[0.8]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn threshold_is_in_hundredths_for_distance_measures() {
        let clusters = |d: f64| -> Vec<LabeledExample> {
            let a = c(1.0 / 3.0 + d, 1.0 / 3.0, 1.0 / 3.0 - d);
            let b = c(1.0 / 3.0, 1.0 / 3.0 + d, 1.0 / 3.0 - d);
            (0..24).map(|i| ex(&[i as f64], if i < 12 { a } else { b })).collect()
        };
        let grow = |d| fit_mv(&clusters(d), &DistanceMeasure::Euclidean, &FitParams::default(), &mut rng()).unwrap();
        // Average error from the root median is d/√2: 0.707e-2 splits,
        // 0.354e-2 stays below the 0.5e-2 threshold.
        assert_eq!(grow(0.01).root.node_count(), 3);
        assert_eq!(grow(0.005).root.node_count(), 1);
    }

    #[test]
    fn hand_built_tree_follows_the_documented_path() {
        // Upper-left path of a reference recovery-error tree over the
        // feature order (f_r1, f_g1, f_r2, f_g2, f_r3, f_g3, f_r4, f_g4).
        let leaf = |r, g, b, n| Box::new(Node::Leaf { leaf: c(r, g, b), count: n });
        let unseen = || leaf(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1);
        let root = Node::Split {
            j: 0,
            p: 0.3297,
            left: Box::new(Node::Split {
                j: 2,
                p: 0.2658,
                left: Box::new(Node::Split { j: 7, p: 0.4549, left: unseen(), right: unseen() }),
                right: Box::new(Node::Split {
                    j: 4,
                    p: 0.2840,
                    left: leaf(0.2503, 0.4779, 0.2718, 8),
                    right: unseen(),
                }),
            }),
            right: Box::new(Node::Split {
                j: 6,
                p: 0.4078,
                left: Box::new(Node::Split {
                    j: 6,
                    p: 0.2902,
                    left: leaf(0.2897, 0.4674, 0.2429, 8),
                    right: unseen(),
                }),
                right: Box::new(Node::Split {
                    j: 0,
                    p: 0.4191,
                    left: leaf(0.3622, 0.4727, 0.1651, 4),
                    right: unseen(),
                }),
            }),
        };
        let tree = Tree { root, n_features: 8 };
        let x = [0.30, 0.40, 0.28, 0.45, 0.25, 0.47, 0.31, 0.46];
        assert_eq!(predict_mv(&tree, &x).unwrap(), c(0.2503, 0.4779, 0.2718));
        let y = [0.40, 0.40, 0.30, 0.45, 0.25, 0.47, 0.45, 0.46];
        assert_eq!(predict_mv(&tree, &y).unwrap(), c(0.3622, 0.4727, 0.1651));
    }

    #[test]
    fn single_leaf_predicts_constant() {
        let t = c(0.3, 0.3, 0.4);
        let tree = Tree { root: Node::Leaf { leaf: t, count: 3 }, n_features: 2 };
        assert_eq!(predict_mv(&tree, &[0.0, 1.0]).unwrap(), t);
        assert_eq!(predict_mv(&tree, &[0.9, 0.1]).unwrap(), t);
    }

    #[test]
    fn uv_constant_and_binary_responses() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let tree = fit_uv(&rows, &[0.7; 20], &FitParams::default(), &mut rng()).unwrap();
        let Node::Leaf { leaf, count } = tree.root else { panic!("expected a leaf") };
        assert_eq!(count, 20);
        assert!((leaf - 0.7).abs() < 1e-15);

        let params = FitParams {
            min_parent_size: 2,
            ..greedy()
        };
        let tree = fit_uv(&[vec![0.1], vec![0.9]], &[0.0, 1.0], &params, &mut rng()).unwrap();
        assert_eq!(predict_uv(&tree, &[0.0]).unwrap(), 0.0);
        assert_eq!(predict_uv(&tree, &[1.0]).unwrap(), 1.0);
        assert_eq!(tree.root.node_count(), 3);
    }

    // Two-pass squared error for every feature and midpoint.
    fn brute_force_uv(rows: &[Vec<f64>], y: &[f64]) -> (usize, f64, f64) {
        let sse = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
        };
        let mut best = (usize::MAX, 0.0, f64::INFINITY);
        for j in 0..rows[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let p = w[0] + 0.5 * (w[1] - w[0]);
                let l: Vec<f64> = rows.iter().zip(y).filter(|(r, _)| r[j] <= p).map(|(_, v)| *v).collect();
                let r: Vec<f64> = rows.iter().zip(y).filter(|(r, _)| r[j] > p).map(|(_, v)| *v).collect();
                let cost = sse(&l) + sse(&r);
                if cost < best.2 - 1e-12 {
                    best = (j, p, cost);
                }
            }
        }
        best
    }

    #[test]
    fn uv_root_split_matches_brute_force() {
        for seed in 0..30 {
            let data = random_dataset(100 + seed, 20, 4);
            let rows: Vec<Vec<f64>> = data.iter().map(|e| e.features.clone()).collect();
            let y: Vec<f64> = data.iter().map(|e| e.truth.r()).collect();
            let params = FitParams {
                min_parent_size: 2,
                ..greedy()
            };
            let tree = fit_uv(&rows, &y, &params, &mut rng()).unwrap();
            let Node::Split { j, p, .. } = tree.root else { panic!() };
            let (bj, bp, _) = brute_force_uv(&rows, &y);
            assert_eq!((j, p), (bj, bp), "seed {seed}");
        }
    }

    #[test]
    fn uv_respects_feature_subset() {
        let data = random_dataset(9, 40, 4);
        let rows: Vec<Vec<f64>> = data.iter().map(|e| e.features.clone()).collect();
        let y: Vec<f64> = data.iter().map(|e| e.truth.g()).collect();
        let tree = fit_uv_on(&rows, &y, &[2, 3], &FitParams::default(), &mut rng()).unwrap();
        fn used(n: &Node<f64>, out: &mut Vec<usize>) {
            if let Node::Split { j, left, right, .. } = n {
                out.push(*j);
                used(left, out);
                used(right, out);
            }
        }
        let mut js = Vec::new();
        used(&tree.root, &mut js);
        assert!(!js.is_empty() && js.iter().all(|j| *j == 2 || *j == 3));
        assert!(fit_uv_on(&rows, &y, &[4], &FitParams::default(), &mut rng()).is_err());
    }

    #[test]
    fn params_are_validated() {
        let bad = FitParams {
            min_parent_size: 3,
            min_leaf_size: 2,
            ..FitParams::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidParams(_))));
        assert!(FitParams { rand_pct: -1.0, ..FitParams::default() }.validate().is_err());
        assert!(FitParams::default().validate().is_ok());
    }

    #[test]
    fn per_channel_versus_joint_residuals() {
        // Independent r and g fits can each be off by +α, while a
        // multivariate leaf keeps the components consistent. Equal squared
        // error, very different angular error.
        let truth = Chromaticity::gray();
        let a = 0.05;
        let uv = Chromaticity::from_rg(truth.r() + a, truth.g() + a).unwrap();
        let mv = Chromaticity::from_rg(truth.r() + a, truth.g() - a).unwrap();
        let sq = |e: &Chromaticity| (e.r() - truth.r()).powi(2) + (e.g() - truth.g()).powi(2);
        assert!((sq(&uv) - sq(&mv)).abs() < 1e-15);
        let du = distance(&DistanceMeasure::Recovery, &uv, &truth).unwrap();
        let dm = distance(&DistanceMeasure::Recovery, &mv, &truth).unwrap();
        assert!(du > dm);
        assert!((du - 11.977).abs() < 1e-3 && (dm - 6.983).abs() < 1e-3);
    }

    // Walks the fitted tree alongside the data, checking at every split that
    // the children's costs do not exceed the parent's.
    fn check_monotone(node: &Node<Chromaticity>, data: &[&LabeledExample], m: &DistanceMeasure) -> Result<(), String> {
        if let Node::Split { j, p, left, right } = node {
            let cost = |set: &[&LabeledExample]| {
                let t: Vec<Chromaticity> = set.iter().map(|e| e.truth).collect();
                approx_minimize(&t, m).unwrap().cost
            };
            let (l, r): (Vec<&LabeledExample>, Vec<&LabeledExample>) =
                data.iter().partition(|e| e.features[*j] <= *p);
            if cost(&l) + cost(&r) > cost(data) + 1e-9 {
                return Err(format!("split on {j} at {p} raised the cost"));
            }
            check_monotone(left, &l, m)?;
            check_monotone(right, &r, m)?;
        } else if let Node::Leaf { leaf, count } = node {
            if *count != data.len() {
                return Err("leaf count mismatch".into());
            }
            let t: Vec<Chromaticity> = data.iter().map(|e| e.truth).collect();
            if approx_minimize(&t, m).unwrap().estimate != *leaf {
                return Err("leaf label is not the median estimate".into());
            }
            let _ = total_cost(leaf, &t, m).unwrap();
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn fitted_trees_are_sound(seed in any::<u64>(), n in 1usize..40, mi in 0usize..5) {
            let m = DistanceMeasure::ALL[mi];
            let data = random_dataset(seed, n, 3);
            let params = FitParams { min_parent_size: 4, error_threshold: 0.0, ..FitParams::default() };
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let tree = fit_mv(&data, &m, &params, &mut r).unwrap();
            prop_assert_eq!(tree.root.total_count(), n);
            let refs: Vec<&LabeledExample> = data.iter().collect();
            if let Err(msg) = check_monotone(&tree.root, &refs, &m) {
                prop_assert!(false, "{}", msg);
            }
            let again = fit_mv(&data, &m, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(tree, again);
        }
    }
}
