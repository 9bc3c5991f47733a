//! Ordinal forests assembled from binary forests.
//!
//! * [`SplitBasedForest`]: one forest per unconditional split variable
//!   `1{Y >= r}`. The cumulative estimates are monotonized with PAVA when
//!   they cross and then differenced.
//! * [`AdjCatForest`]: one forest per conditional split `1{Y = r}` fitted on
//!   rows with `Y ∈ {r-1, r}`. Member log-odds are combined with the
//!   adjacent-categories formula, which needs no ordering constraint.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{conditional_target, split_indicator, BinaryTarget, DataError, FeatureMatrix, OrdinalDataset};
use crate::forest::{fit_forest, BinaryForest, ForestConfig, ForestError};
use crate::isotonic::pava_decreasing_unweighted;
use crate::link::{adjacent_logits_to_probs, logit};
use crate::rng::derive_seed;

/// One binary member of an ordinal forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Member {
    Forest(BinaryForest),
    /// Degenerate member: the Laplace-smoothed class-1 rate of its training
    /// subset, independent of `x`.
    Constant {
        n0: usize,
        n1: usize,
    },
}

impl Member {
    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            Member::Forest(f) => f.predict_unchecked(x),
            Member::Constant { n0, n1 } => (*n1 as f64 + 1.0) / ((n0 + n1) as f64 + 2.0),
        }
    }

    pub fn log_odds(&self, x: &[f64]) -> f64 {
        match self {
            Member::Forest(f) => logit(f.predict_unchecked(x)),
            Member::Constant { n0, n1 } => ((*n1 as f64 + 1.0) / (*n0 as f64 + 1.0)).ln(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Member::Constant { .. })
    }

    pub fn forest(&self) -> Option<&BinaryForest> {
        match self {
            Member::Forest(f) => Some(f),
            Member::Constant { .. } => None,
        }
    }
}

/// Seed of member `r` given the ensemble seed.
pub fn member_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, r as u64)
}

fn fit_member(
    features: &FeatureMatrix,
    target: &BinaryTarget,
    config: &ForestConfig,
    min_rows: usize,
) -> Result<Member, ForestError> {
    let n1 = target.count_ones();
    let n0 = target.len() - n1;
    if n0 == 0 || n1 == 0 || target.len() < min_rows {
        return Ok(Member::Constant { n0, n1 });
    }
    let forest_config = config.with_seed(member_seed(config.seed, target.split));
    let forest = if target.conditional {
        fit_forest(&features.select_rows(&target.row_indices), &target.values, &forest_config)?
    } else {
        fit_forest(features, &target.values, &forest_config)?
    };
    Ok(Member::Forest(forest))
}

fn check_dim(x: &[f64], p: usize) -> Result<(), ForestError> {
    if x.len() != p {
        return Err(ForestError::DimensionMismatch { expected: p, found: x.len() });
    }
    Ok(())
}

fn data_err(e: DataError) -> ForestError {
    ForestError::InvalidConfig(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBasedForest {
    k: usize,
    n_features: usize,
    config: ForestConfig,
    /// Member for split `r` at index `r - 2`.
    members: Vec<Member>,
}

pub fn fit_split_based(dataset: &OrdinalDataset, config: &ForestConfig) -> Result<SplitBasedForest, ForestError> {
    let targets: Vec<BinaryTarget> =
        (2..=dataset.k()).map(|r| split_indicator(dataset, r)).collect::<Result<_, _>>().map_err(data_err)?;
    let members = targets.par_iter().map(|t| fit_member(dataset.features(), t, config, 1)).collect::<Result<_, _>>()?;
    Ok(SplitBasedForest { k: dataset.k(), n_features: dataset.p(), config: config.clone(), members })
}

impl SplitBasedForest {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Splits whose member degenerated to a constant.
    pub fn degenerate_splits(&self) -> Vec<usize> {
        degenerate(&self.members)
    }

    /// Raw member estimates of `P(Y >= r | x)`, `r = 2..=k`.
    pub fn raw_cumulative(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        check_dim(x, self.n_features)?;
        Ok(self.members.iter().map(|m| m.probability(x)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        Ok(cumulative_to_class_probs(&self.raw_cumulative(x)?))
    }
}

/// Class probabilities from estimates of `P(Y >= r)`, `r = 2..=k`; the
/// estimates are replaced by their decreasing PAVA fit when they cross.
pub fn cumulative_to_class_probs(raw: &[f64]) -> Vec<f64> {
    let monotone = raw.windows(2).all(|w| w[0] >= w[1]);
    let mut cum = if monotone { raw.to_vec() } else { pava_decreasing_unweighted(raw).expect("non-empty") };
    cum.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
    let mut probs = Vec::with_capacity(cum.len() + 1);
    probs.push(1.0 - cum[0]);
    for w in cum.windows(2) {
        probs.push(w[0] - w[1]);
    }
    probs.push(cum[cum.len() - 1]);
    probs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjCatForest {
    k: usize,
    n_features: usize,
    config: ForestConfig,
    members: Vec<Member>,
}

/// Fits member `r` on rows with response in `{r-1, r}`. Subsets with fewer
/// than `2 * min_node_size` rows or a single class become constants.
pub fn fit_adjcat_forest(dataset: &OrdinalDataset, config: &ForestConfig) -> Result<AdjCatForest, ForestError> {
    let targets: Vec<BinaryTarget> =
        (2..=dataset.k()).map(|r| conditional_target(dataset, r)).collect::<Result<_, _>>().map_err(data_err)?;
    let min_rows = 2 * config.min_node_size;
    let members =
        targets.par_iter().map(|t| fit_member(dataset.features(), t, config, min_rows)).collect::<Result<_, _>>()?;
    Ok(AdjCatForest { k: dataset.k(), n_features: dataset.p(), config: config.clone(), members })
}

impl AdjCatForest {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn degenerate_splits(&self) -> Vec<usize> {
        degenerate(&self.members)
    }

    /// Conditional log-odds of each member at `x`.
    pub fn log_odds(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        check_dim(x, self.n_features)?;
        Ok(self.members.iter().map(|m| m.log_odds(x)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        check_dim(x, self.n_features)?;
        if self.k == 2 {
            // logit followed by the inverse logit; skip the round trip
            let p = self.members[0].probability(x);
            return Ok(vec![1.0 - p, p]);
        }
        Ok(adjacent_logits_to_probs(&self.log_odds(x)?))
    }
}

fn degenerate(members: &[Member]) -> Vec<usize> {
    members.iter().enumerate().filter(|(_, m)| m.is_constant()).map(|(i, _)| i + 2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceKind {
    Gini,
    Permutation,
}

/// Importance matrix with one row per split `r = 2..=k` (row `r - 2`) and one
/// column per feature. Constant members contribute a zero row.
///
/// `dataset` must be the learning set the model was fitted on; permutation
/// importance reads out-of-bag rows from it.
pub fn split_importances<R: RngCore + ?Sized>(
    members: &[Member],
    conditional: bool,
    dataset: &OrdinalDataset,
    kind: ImportanceKind,
    rng: &mut R,
    n_repeats: usize,
) -> Result<Vec<Vec<f64>>, ForestError> {
    let p = dataset.p();
    let mut rows = Vec::with_capacity(members.len());
    for (i, member) in members.iter().enumerate() {
        let r = i + 2;
        let Some(forest) = member.forest() else {
            rows.push(vec![0.0; p]);
            continue;
        };
        let row = match kind {
            ImportanceKind::Gini => forest.gini_importance(),
            ImportanceKind::Permutation => {
                let target = if conditional { conditional_target(dataset, r) } else { split_indicator(dataset, r) }
                    .map_err(data_err)?;
                let features = if conditional {
                    dataset.features().select_rows(&target.row_indices)
                } else {
                    dataset.features().clone()
                };
                forest.permutation_importance(&features, &target.values, rng, n_repeats)?
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

impl SplitBasedForest {
    pub fn split_importances<R: RngCore + ?Sized>(
        &self,
        dataset: &OrdinalDataset,
        kind: ImportanceKind,
        rng: &mut R,
        n_repeats: usize,
    ) -> Result<Vec<Vec<f64>>, ForestError> {
        split_importances(&self.members, false, dataset, kind, rng, n_repeats)
    }
}

impl AdjCatForest {
    pub fn split_importances<R: RngCore + ?Sized>(
        &self,
        dataset: &OrdinalDataset,
        kind: ImportanceKind,
        rng: &mut R,
        n_repeats: usize,
    ) -> Result<Vec<Vec<f64>>, ForestError> {
        split_importances(&self.members, true, dataset, kind, rng, n_repeats)
    }
}

/// Unweighted mean of the split rows.
pub fn averaged_importance(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut avg = vec![0.0; first.len()];
    for row in rows {
        for (a, v) in avg.iter_mut().zip(row) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= rows.len() as f64);
    avg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn data(n: usize, k: usize, seed: u64) -> OrdinalDataset {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = rows
            .iter()
            .map(|r| {
                let s = r[0] + 0.5 * r[1] + rng.gen_range(-0.5..0.5);
                (((s + 2.0) / 4.0 * k as f64).floor() as usize).clamp(0, k - 1) + 1
            })
            .collect();
        OrdinalDataset::from_parts(FeatureMatrix::from_rows(&rows).unwrap(), y, k).unwrap()
    }

    fn cfg() -> ForestConfig {
        ForestConfig { n_trees: 20, seed: 5, ..ForestConfig::default() }
    }

    fn assert_distribution(p: &[f64]) {
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotonization_examples() {
        let p = cumulative_to_class_probs(&[0.9, 0.5, 0.7]);
        for (a, b) in p.iter().zip([0.1, 0.3, 0.0, 0.6]) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
        let p = cumulative_to_class_probs(&[0.8, 0.5, 0.2]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(cumulative_to_class_probs(&[0.25]), vec![0.75, 0.25]);
    }

    #[test]
    fn forests_return_distributions() {
        let d = data(150, 4, 1);
        let sb = fit_split_based(&d, &cfg()).unwrap();
        let ac = fit_adjcat_forest(&d, &cfg()).unwrap();
        assert_eq!((sb.members().len(), ac.members().len()), (3, 3));
        for i in 0..d.n() {
            assert_distribution(&sb.predict(d.row(i)).unwrap());
            assert_distribution(&ac.predict(d.row(i)).unwrap());
        }
        assert!(sb.predict(&[0.0]).is_err());
        assert!(ac.predict(&[0.0]).is_err());
    }

    #[test]
    fn adjcat_members_train_on_adjacent_rows_only() {
        let d = data(120, 3, 2);
        let ac = fit_adjcat_forest(&d, &cfg()).unwrap();
        for (i, m) in ac.members().iter().enumerate() {
            let r = i + 2;
            let expected = d.response().iter().filter(|&&y| y == r || y == r - 1).count();
            assert_eq!(m.forest().unwrap().n_train(), expected);
        }
    }

    #[test]
    fn fallback_members() {
        // category 3 absent: split 3 is one-class, split 2 conditional subset is fine
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..30).map(|i| 1 + (i % 2)).collect();
        let d = OrdinalDataset::from_parts(FeatureMatrix::from_rows(&rows).unwrap(), y, 3).unwrap();
        let ac = fit_adjcat_forest(&d, &cfg()).unwrap();
        assert_eq!(ac.degenerate_splits(), vec![3]);
        assert_eq!(ac.members()[1], Member::Constant { n0: 15, n1: 0 });
        assert!((ac.members()[1].log_odds(&[0.0]) - (1.0f64 / 16.0).ln()).abs() < 1e-15);
        let sb = fit_split_based(&d, &cfg()).unwrap();
        assert_eq!(sb.degenerate_splits(), vec![3]);
        // empty conditional subset gives log-odds 0
        assert_eq!(Member::Constant { n0: 0, n1: 0 }.log_odds(&[]), 0.0);
        // too few rows for 2 * min_node_size
        let small = ForestConfig { min_node_size: 20, ..cfg() };
        let ac = fit_adjcat_forest(&d, &small).unwrap();
        assert_eq!(ac.degenerate_splits(), vec![2, 3]);
    }

    #[test]
    fn k2_collapse_matches_binary_forest() {
        let d = data(100, 2, 3);
        let sb = fit_split_based(&d, &cfg()).unwrap();
        let ac = fit_adjcat_forest(&d, &cfg()).unwrap();
        let target: Vec<u8> = d.response().iter().map(|&y| u8::from(y == 2)).collect();
        let bf = fit_forest(d.features(), &target, &cfg().with_seed(member_seed(cfg().seed, 2))).unwrap();
        for i in 0..d.n() {
            let p = bf.predict_proba(d.row(i)).unwrap();
            assert_eq!(sb.predict(d.row(i)).unwrap(), vec![1.0 - p, p]);
            assert_eq!(ac.predict(d.row(i)).unwrap(), vec![1.0 - p, p]);
        }
    }

    #[test]
    fn importances() {
        let d = data(200, 3, 4);
        let sb = fit_split_based(&d, &cfg()).unwrap();
        let gini = sb.split_importances(&d, ImportanceKind::Gini, &mut rng_from_seed(0), 1).unwrap();
        assert_eq!((gini.len(), gini[0].len()), (2, 3));
        let ac = fit_adjcat_forest(&d, &cfg()).unwrap();
        let perm = ac.split_importances(&d, ImportanceKind::Permutation, &mut rng_from_seed(0), 2).unwrap();
        assert_eq!((perm.len(), perm[0].len()), (2, 3));
        assert_eq!(averaged_importance(&[vec![1.0, 0.0], vec![0.0, 1.0]]), vec![0.5, 0.5]);
        assert_eq!(averaged_importance(&[vec![0.3, 0.2]]), vec![0.3, 0.2]);
    }
}
