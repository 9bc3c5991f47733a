//! Bagged random forests of binary CART trees.
//!
//! A [`BinaryForest`] estimates `P(target = 1 | x)` as the mean of the
//! Laplace-smoothed leaf probabilities of its trees, so predictions always lie
//! strictly inside `(0, 1)`. Tree `t` draws all of its randomness from a
//! stream derived from `(seed, t)`, which makes every fit independent of the
//! rayon schedule.

mod tree;

pub use tree::{best_split, fit_tree, gini_impurity, DecisionTree, Node, SplitCandidate, TreeParams};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureMatrix;
use crate::rng::{derive_path, rng_from_seed, stream_rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("no training rows")]
    EmptyData,
    #[error("Gini impurity of an empty node is undefined")]
    EmptyNode,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("no out-of-bag rows available (bootstrap disabled?); use a holdout set for permutation importance")]
    NoOobRows,
    #[error("permutation importance needs at least one repeat")]
    ZeroRepeats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `max(1, floor(sqrt(p)))`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 500, mtry: None, min_node_size: 5, max_depth: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
    }

    pub fn validate(&self, p: usize) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(ForestError::InvalidConfig("min_node_size must be at least 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || (p > 0 && m > p) {
                return Err(ForestError::InvalidConfig(format!("mtry {m} outside 1..={p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryForest {
    config: ForestConfig,
    n_features: usize,
    n_train: usize,
    trees: Vec<DecisionTree>,
    /// Sorted training-row multiset of each tree's bag.
    bags: Vec<Vec<u32>>,
}

/// Fits `config.n_trees` trees, each on its own bootstrap bag (or on every
/// row when bootstrapping is off).
pub fn fit_forest(features: &FeatureMatrix, target: &[u8], config: &ForestConfig) -> Result<BinaryForest, ForestError> {
    let n = features.n_rows();
    let p = features.n_cols();
    if n == 0 {
        return Err(ForestError::EmptyData);
    }
    if target.len() != n {
        return Err(ForestError::DimensionMismatch { expected: n, found: target.len() });
    }
    config.validate(p)?;
    let params =
        TreeParams { mtry: config.resolved_mtry(p), min_node_size: config.min_node_size, max_depth: config.max_depth };
    let fitted: Vec<(DecisionTree, Vec<u32>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(config.seed, t as u64);
            let mut bag: Vec<usize> =
                if config.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
            bag.sort_unstable();
            let tree = fit_tree(features, target, &bag, &params, &mut rng)?;
            Ok((tree, bag.into_iter().map(|i| i as u32).collect()))
        })
        .collect::<Result<_, ForestError>>()?;
    let (trees, bags) = fitted.into_iter().unzip();
    Ok(BinaryForest { config: config.clone(), n_features: p, n_train: n, trees, bags })
}

impl BinaryForest {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn bags(&self) -> &[Vec<u32>] {
        &self.bags
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Mean smoothed leaf probability over all trees.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch { expected: self.n_features, found: x.len() });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_many(&self, features: &FeatureMatrix) -> Result<Vec<f64>, ForestError> {
        if features.n_cols() != self.n_features {
            return Err(ForestError::DimensionMismatch { expected: self.n_features, found: features.n_cols() });
        }
        Ok((0..features.n_rows()).into_par_iter().map(|i| self.predict_unchecked(features.row(i))).collect())
    }

    /// Rows absent from each tree's bag.
    fn oob_rows(&self) -> Vec<Vec<usize>> {
        self.bags
            .iter()
            .map(|bag| {
                let mut in_bag = vec![false; self.n_train];
                for &i in bag {
                    in_bag[i as usize] = true;
                }
                (0..self.n_train).filter(|&i| !in_bag[i]).collect()
            })
            .collect()
    }

    fn check_training_matrix(&self, features: &FeatureMatrix) -> Result<(), ForestError> {
        if features.n_rows() != self.n_train {
            return Err(ForestError::DimensionMismatch { expected: self.n_train, found: features.n_rows() });
        }
        if features.n_cols() != self.n_features {
            return Err(ForestError::DimensionMismatch { expected: self.n_features, found: features.n_cols() });
        }
        Ok(())
    }

    /// Out-of-bag probability of each training row; `None` for rows that
    /// every tree saw.
    pub fn oob_proba(&self, features: &FeatureMatrix) -> Result<Vec<Option<f64>>, ForestError> {
        self.check_training_matrix(features)?;
        let mut sum = vec![0.0; self.n_train];
        let mut count = vec![0usize; self.n_train];
        for (tree, oob) in self.trees.iter().zip(self.oob_rows()) {
            for i in oob {
                sum[i] += tree.predict(features.row(i));
                count[i] += 1;
            }
        }
        Ok(sum.into_iter().zip(count).map(|(s, c)| (c > 0).then(|| s / c as f64)).collect())
    }

    /// Mean Brier score of the out-of-bag probabilities.
    pub fn oob_brier(&self, features: &FeatureMatrix, target: &[u8]) -> Result<Option<f64>, ForestError> {
        let oob = self.oob_proba(features)?;
        Ok(brier(&oob, target))
    }

    /// Per feature: summed `n * impurity decrease` over all splits on that
    /// feature, averaged over trees.
    pub fn gini_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for tree in &self.trees {
            tree.accumulate_importance(&mut acc);
        }
        let nt = self.trees.len() as f64;
        acc.iter_mut().for_each(|v| *v /= nt);
        acc
    }

    /// Increase of the out-of-bag Brier score when feature `j` is permuted
    /// among each tree's out-of-bag rows, averaged over `n_repeats`.
    pub fn permutation_importance<R: RngCore + ?Sized>(
        &self,
        features: &FeatureMatrix,
        target: &[u8],
        rng: &mut R,
        n_repeats: usize,
    ) -> Result<Vec<f64>, ForestError> {
        if n_repeats == 0 {
            return Err(ForestError::ZeroRepeats);
        }
        self.check_training_matrix(features)?;
        if target.len() != self.n_train {
            return Err(ForestError::DimensionMismatch { expected: self.n_train, found: target.len() });
        }
        let oob = self.oob_rows();
        let baseline = self.oob_brier(features, target)?.ok_or(ForestError::NoOobRows)?;
        let base_seed = rng.next_u64();
        let importance = (0..self.n_features)
            .into_par_iter()
            .map(|j| {
                let mut total = 0.0;
                for rep in 0..n_repeats {
                    let mut sum = vec![0.0; self.n_train];
                    let mut count = vec![0usize; self.n_train];
                    for (t, (tree, rows)) in self.trees.iter().zip(&oob).enumerate() {
                        if rows.is_empty() {
                            continue;
                        }
                        let mut prng = rng_from_seed(derive_path(base_seed, &[j as u64, rep as u64, t as u64]));
                        let mut shuffled = rows.clone();
                        shuffled.shuffle(&mut prng);
                        for (&i, &donor) in rows.iter().zip(&shuffled) {
                            sum[i] += tree.predict_with_override(features.row(i), j, features.get(donor, j));
                            count[i] += 1;
                        }
                    }
                    let probs: Vec<Option<f64>> =
                        sum.iter().zip(&count).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect();
                    total += brier(&probs, target).unwrap_or(baseline) - baseline;
                }
                total / n_repeats as f64
            })
            .collect();
        Ok(importance)
    }

    pub fn to_json(&self) -> String {
        crate::model::to_versioned_json("binary_forest", self)
    }

    pub fn from_json(text: &str) -> Result<Self, crate::model::ModelIoError> {
        crate::model::from_versioned_json("binary_forest", text)
    }
}

fn brier(probs: &[Option<f64>], target: &[u8]) -> Option<f64> {
    let (sum, n) = probs
        .iter()
        .zip(target)
        .filter_map(|(p, &y)| p.map(|p| (p - f64::from(y)).powi(2)))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn noisy_threshold_data(n: usize, p: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = rng_from_seed(seed);
        let data: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = FeatureMatrix::new(n, p, data).unwrap();
        let y = (0..n).map(|i| u8::from(x.get(i, 0) > 0.0)).collect();
        (x, y)
    }

    fn small_config(n_trees: usize) -> ForestConfig {
        ForestConfig { n_trees, seed: 17, ..ForestConfig::default() }
    }

    #[test]
    fn single_tree_forest_equals_tree() {
        let (x, y) = noisy_threshold_data(60, 3, 1);
        let f = fit_forest(&x, &y, &small_config(1)).unwrap();
        for i in 0..60 {
            assert_eq!(f.predict_proba(x.row(i)).unwrap(), f.trees()[0].predict(x.row(i)));
        }
    }

    #[test]
    fn all_positive_targets_predict_above_half() {
        let (x, _) = noisy_threshold_data(50, 2, 2);
        let f = fit_forest(&x, &[1; 50], &small_config(20)).unwrap();
        for v in [-5.0, 0.0, 0.3, 10.0] {
            let p = f.predict_proba(&[v, -v]).unwrap();
            assert!(p > 0.5 && p < 1.0);
        }
    }

    #[test]
    fn deterministic_given_seed_and_schedule() {
        let (x, y) = noisy_threshold_data(80, 4, 3);
        let a = fit_forest(&x, &y, &small_config(30)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| fit_forest(&x, &y, &small_config(30)).unwrap());
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, &small_config(30).with_seed(18)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn predictions_strictly_inside_unit_interval() {
        let (x, y) = noisy_threshold_data(100, 2, 4);
        let cfg = ForestConfig { min_node_size: 1, ..small_config(25) };
        let f = fit_forest(&x, &y, &cfg).unwrap();
        for p in f.predict_many(&x).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(matches!(f.predict_proba(&[0.0]), Err(ForestError::DimensionMismatch { .. })));
    }

    #[test]
    fn unused_feature_never_changes_predictions() {
        let (mut x, y) = noisy_threshold_data(80, 3, 5);
        // column 2 is constant, so no tree can split on it
        for i in 0..80 {
            x.set(i, 2, 1.0);
        }
        let f = fit_forest(&x, &y, &small_config(20)).unwrap();
        assert!(f.trees().iter().all(|t| t.used_features().all(|j| j != 2)));
        for i in 0..80 {
            let mut row = x.row(i).to_vec();
            let before = f.predict_proba(&row).unwrap();
            row[2] = -123.0;
            assert_eq!(before, f.predict_proba(&row).unwrap());
        }
        assert_eq!(f.gini_importance()[2], 0.0);
    }

    #[test]
    fn config_validation() {
        let (x, y) = noisy_threshold_data(10, 2, 6);
        for cfg in [
            ForestConfig { n_trees: 0, ..ForestConfig::default() },
            ForestConfig { mtry: Some(3), ..ForestConfig::default() },
            ForestConfig { mtry: Some(0), ..ForestConfig::default() },
            ForestConfig { min_node_size: 0, ..ForestConfig::default() },
        ] {
            assert!(matches!(fit_forest(&x, &y, &cfg), Err(ForestError::InvalidConfig(_))));
        }
        assert_eq!(ForestConfig::default().resolved_mtry(10), 3);
        assert_eq!(ForestConfig::default().resolved_mtry(1), 1);
    }

    #[test]
    fn oob_rows_cover_out_of_bag_only() {
        let (x, y) = noisy_threshold_data(40, 2, 7);
        let f = fit_forest(&x, &y, &small_config(1)).unwrap();
        let oob = f.oob_proba(&x).unwrap();
        for (i, p) in oob.iter().enumerate() {
            let in_bag = f.bags()[0].contains(&(i as u32));
            assert_eq!(p.is_some(), !in_bag);
        }
        let full = fit_forest(&x, &y, &ForestConfig { bootstrap: false, ..small_config(3) }).unwrap();
        assert!(full.oob_proba(&x).unwrap().iter().all(Option::is_none));
        assert_eq!(full.permutation_importance(&x, &y, &mut rng_from_seed(0), 1), Err(ForestError::NoOobRows));
    }

    #[test]
    fn single_split_importance_concentrates() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 5.0], vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let cfg =
            ForestConfig { n_trees: 1, mtry: Some(2), min_node_size: 1, bootstrap: false, ..ForestConfig::default() };
        let f = fit_forest(&x, &[0, 0, 1, 1], &cfg).unwrap();
        let imp = f.gini_importance();
        assert!((imp[0] - 2.0).abs() < 1e-12);
        assert_eq!(imp[1], 0.0);
    }

    #[test]
    fn permutation_importance_finds_signal() {
        let (x, y) = noisy_threshold_data(300, 4, 8);
        let f = fit_forest(&x, &y, &small_config(60)).unwrap();
        let imp = f.permutation_importance(&x, &y, &mut rng_from_seed(1), 2).unwrap();
        let top = (0..4).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(top, 0);
        assert_eq!(f.permutation_importance(&x, &y, &mut rng_from_seed(1), 0), Err(ForestError::ZeroRepeats));
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let (x, y) = noisy_threshold_data(50, 3, 9);
        let f = fit_forest(&x, &y, &small_config(10)).unwrap();
        let g = BinaryForest::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
        assert_eq!(f.predict_many(&x).unwrap(), g.predict_many(&x).unwrap());
    }
}
