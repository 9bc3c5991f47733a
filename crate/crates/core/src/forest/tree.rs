//! CART classification trees for a 0/1 target.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::data::FeatureMatrix;

/// Gains at or below this are treated as zero, and a candidate must beat the
/// incumbent by more than this to replace it (ties go to the earlier one).
const GAIN_EPS: f64 = 1e-12;

/// Gini impurity `1 - q^2 - (1-q)^2 = 2 n0 n1 / n^2` of a node with the
/// given class counts.
pub fn gini_impurity(n0: usize, n1: usize) -> Result<f64, ForestError> {
    let n = n0 + n1;
    if n == 0 {
        return Err(ForestError::EmptyNode);
    }
    let n = n as f64;
    Ok(2.0 * n0 as f64 * n1 as f64 / (n * n))
}

/// `n * gini`, i.e. `2 n0 n1 / n`; zero for an empty node.
#[inline]
fn weighted_gini(n0: usize, n1: usize) -> f64 {
    let n = n0 + n1;
    if n == 0 {
        0.0
    } else {
        2.0 * n0 as f64 * n1 as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Impurity decrease per observation: parent Gini minus the
    /// size-weighted mean of the child Ginis.
    pub gain: f64,
}

/// Exhaustive search over `candidates` x midpoints between consecutive
/// distinct values. Rows go left when `x <= threshold`.
pub fn best_split(
    features: &FeatureMatrix,
    target: &[u8],
    rows: &[usize],
    candidates: &[usize],
    min_node_size: usize,
) -> Option<SplitCandidate> {
    let mut scratch = Vec::with_capacity(rows.len());
    best_split_with(features, target, rows, candidates, min_node_size, &mut scratch)
}

fn best_split_with(
    features: &FeatureMatrix,
    target: &[u8],
    rows: &[usize],
    candidates: &[usize],
    min_node_size: usize,
    scratch: &mut Vec<(f64, u8)>,
) -> Option<SplitCandidate> {
    let n = rows.len();
    let min_node_size = min_node_size.max(1);
    if n < 2 * min_node_size {
        return None;
    }
    let n1: usize = rows.iter().map(|&i| target[i] as usize).sum();
    let n0 = n - n1;
    let parent = weighted_gini(n0, n1);
    let mut best: Option<SplitCandidate> = None;
    for &feature in candidates {
        scratch.clear();
        scratch.extend(rows.iter().map(|&i| (features.get(i, feature), target[i])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let (mut l0, mut l1) = (0usize, 0usize);
        for i in 1..n {
            if scratch[i - 1].1 == 1 {
                l1 += 1;
            } else {
                l0 += 1;
            }
            if i < min_node_size || n - i < min_node_size {
                continue;
            }
            let (lo, hi) = (scratch[i - 1].0, scratch[i].0);
            if lo >= hi {
                continue;
            }
            let decrease = parent - weighted_gini(l0, l1) - weighted_gini(n0 - l0, n1 - l1);
            let gain = decrease / n as f64;
            if gain <= GAIN_EPS {
                continue;
            }
            if best.map_or(true, |b| gain > b.gain + GAIN_EPS) {
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitCandidate { feature, threshold, gain });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Training-bag rows reaching the node.
        n: usize,
        /// `n` times the per-observation impurity decrease.
        decrease: f64,
    },
    Leaf {
        n0: usize,
        n1: usize,
        p1: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
}

/// Binary classification tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Index of the leaf reached by `x`.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Smoothed class-1 probability of the leaf reached by `x`.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { p1, .. } => p1,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Like [`predict`](Self::predict) but reads feature `feature` as `value`.
    #[inline]
    pub fn predict_with_override(&self, x: &[f64], feature: usize, value: f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { feature: f, threshold, left, right, .. } => {
                    let v = if f == feature { value } else { x[f] };
                    i = if v <= threshold { left } else { right };
                }
                Node::Leaf { p1, .. } => return p1,
            }
        }
    }

    /// Adds each split's weighted impurity decrease to `acc[feature]`.
    pub fn accumulate_importance(&self, acc: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split { feature, decrease, .. } = node {
                acc[*feature] += decrease;
            }
        }
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

/// Grows a tree on the row multiset `rows`. A fresh subset of `mtry`
/// features is drawn at each node.
pub fn fit_tree<R: Rng + ?Sized>(
    features: &FeatureMatrix,
    target: &[u8],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree, ForestError> {
    if rows.is_empty() {
        return Err(ForestError::EmptyData);
    }
    if target.len() != features.n_rows() {
        return Err(ForestError::DimensionMismatch { expected: features.n_rows(), found: target.len() });
    }
    let p = features.n_cols();
    let mtry = params.mtry.clamp(1, p.max(1));
    let mut rows = rows.to_vec();
    let mut nodes: Vec<Node> = Vec::new();
    let mut scratch = Vec::with_capacity(rows.len());
    // (node slot, start, end, depth)
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    nodes.push(Node::Leaf { n0: 0, n1: 0, p1: 0.5 });
    while let Some((slot, start, end, depth)) = stack.pop() {
        let node_rows = &mut rows[start..end];
        let n = node_rows.len();
        let n1: usize = node_rows.iter().map(|&i| target[i] as usize).sum();
        let n0 = n - n1;
        let can_split = n0 > 0 && n1 > 0 && params.max_depth.map_or(true, |d| depth < d) && p > 0;
        let split = if can_split {
            let mut candidates = index::sample(rng, p, mtry).into_vec();
            candidates.sort_unstable();
            best_split_with(features, target, node_rows, &candidates, params.min_node_size, &mut scratch)
        } else {
            None
        };
        match split {
            None => {
                nodes[slot] = Node::Leaf { n0, n1, p1: (n1 as f64 + 1.0) / (n as f64 + 2.0) };
            }
            Some(s) => {
                let mut mid = 0;
                for i in 0..n {
                    if features.get(node_rows[i], s.feature) <= s.threshold {
                        node_rows.swap(i, mid);
                        mid += 1;
                    }
                }
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { n0: 0, n1: 0, p1: 0.5 });
                nodes.push(Node::Leaf { n0: 0, n1: 0, p1: 0.5 });
                nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                    n,
                    decrease: s.gain * n as f64,
                };
                stack.push((right, start + mid, end, depth + 1));
                stack.push((left, start, start + mid, depth + 1));
            }
        }
    }
    Ok(DecisionTree { n_features: p, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn params(mtry: usize, min_node_size: usize) -> TreeParams {
        TreeParams { mtry, min_node_size, max_depth: None }
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity(7, 0).unwrap(), 0.0);
        assert_eq!(gini_impurity(5, 5).unwrap(), 0.5);
        assert!((gini_impurity(3, 1).unwrap() - 0.375).abs() < 1e-15);
        assert!(gini_impurity(0, 0).is_err());
        for a in 0..20 {
            for b in 0..20 {
                if a + b > 0 {
                    let g = gini_impurity(a, b).unwrap();
                    assert_eq!(g, gini_impurity(b, a).unwrap());
                    assert!((0.0..=0.5).contains(&g));
                }
            }
        }
    }

    /// Brute-force reference: every threshold of every feature, gain from
    /// the textbook formula.
    fn oracle_best(x: &FeatureMatrix, y: &[u8], rows: &[usize], min_node: usize) -> Option<(usize, f64, f64)> {
        let gini = |r: &[usize]| {
            let n1 = r.iter().filter(|&&i| y[i] == 1).count();
            gini_impurity(r.len() - n1, n1).unwrap()
        };
        let parent = gini(rows);
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..x.n_cols() {
            let mut vals: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, j) <= t);
                if l.len() < min_node || r.len() < min_node {
                    continue;
                }
                let n = rows.len() as f64;
                let gain = parent - (l.len() as f64 * gini(&l) + r.len() as f64 * gini(&r)) / n;
                if gain > 1e-12 && best.map_or(true, |b| gain > b.2 + 1e-12) {
                    best = Some((j, t, gain));
                }
            }
        }
        best
    }

    #[test]
    fn best_split_example() {
        let x = FeatureMatrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = best_split(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0], 1).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!((s.gain - 0.5).abs() < 1e-15);
    }

    #[test]
    fn best_split_constant_feature_and_tie_rule() {
        let x = FeatureMatrix::new(4, 1, vec![1.0; 4]).unwrap();
        assert!(best_split(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0], 1).is_none());
        // duplicated column: the lower index wins
        let x = FeatureMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]]).unwrap();
        let s = best_split(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0, 1], 1).unwrap();
        assert_eq!(s.feature, 0);
        // min node size blocks every split
        assert!(best_split(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0, 1], 3).is_none());
    }

    #[test]
    fn best_split_matches_brute_force() {
        use rand::Rng;
        let mut rng = rng_from_seed(42);
        for _ in 0..200 {
            let n = rng.gen_range(2..25);
            let p = rng.gen_range(1..4);
            let data: Vec<f64> = (0..n * p).map(|_| rng.gen_range(0..6) as f64).collect();
            let x = FeatureMatrix::new(n, p, data).unwrap();
            let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let rows: Vec<usize> = (0..n).collect();
            let min_node = rng.gen_range(1..4);
            let got = best_split(&x, &y, &rows, &(0..p).collect::<Vec<_>>(), min_node);
            let want = oracle_best(&x, &y, &rows, min_node);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    assert_eq!((g.feature, g.threshold), (w.0, w.1));
                    assert!((g.gain - w.2).abs() < 1e-12);
                }
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn single_row_tree_is_smoothed_leaf() {
        let x = FeatureMatrix::new(1, 2, vec![0.3, 0.7]).unwrap();
        let t = fit_tree(&x, &[1], &[0], &params(2, 1), &mut rng_from_seed(0)).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert!((t.predict(&[0.0, 0.0]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separable_data_is_reproduced() {
        let rows: Vec<Vec<f64>> =
            (0..40).map(|i| vec![(i % 7) as f64, i as f64 * 0.1, ((i * 13) % 5) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from((i % 7 >= 3) ^ (i >= 25))).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let all: Vec<usize> = (0..40).collect();
        let t = fit_tree(&x, &y, &all, &params(3, 1), &mut rng_from_seed(9)).unwrap();
        for i in 0..40 {
            assert_eq!(u8::from(t.predict(x.row(i)) > 0.5), y[i]);
        }
        let t2 = fit_tree(&x, &y, &all, &params(3, 1), &mut rng_from_seed(9)).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn leaf_counts_sum_to_bag_size() {
        let x = FeatureMatrix::new(30, 1, (0..30).map(|i| (i * 7 % 11) as f64).collect()).unwrap();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0)).collect();
        let bag: Vec<usize> = (0..30).chain(0..10).collect();
        let t = fit_tree(&x, &y, &bag, &params(1, 2), &mut rng_from_seed(1)).unwrap();
        let total: usize = t
            .nodes()
            .iter()
            .map(|n| match n {
                Node::Leaf { n0, n1, p1 } => {
                    assert!(*p1 > 0.0 && *p1 < 1.0);
                    n0 + n1
                }
                _ => 0,
            })
            .sum();
        assert_eq!(total, 40);
    }

    #[test]
    fn max_depth_limits_growth() {
        let x = FeatureMatrix::new(64, 1, (0..64).map(f64::from).collect()).unwrap();
        let y: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
        let t = fit_tree(
            &x,
            &y,
            &(0..64).collect::<Vec<_>>(),
            &TreeParams { mtry: 1, min_node_size: 1, max_depth: Some(2) },
            &mut rng_from_seed(0),
        )
        .unwrap();
        assert!(t.nodes().len() <= 7);
    }
}
