//! Losses, class predictors and the repeated learn/validation benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split_rows, OrdinalDataset};
use crate::model::MethodSpec;
use crate::rng::{derive_path, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("category {y} outside 1..={k}")]
    InvalidCategory { y: usize, k: usize },
    #[error("not a probability distribution: {0:?}")]
    InvalidDistribution(Vec<f64>),
    #[error("benchmark needs at least one method")]
    NoMethods,
    #[error("method name `{0}` is used twice")]
    DuplicateMethod(String),
    #[error("n_repeats must be at least 1")]
    NoRepeats,
    #[error("learning-set size {n_learn} must lie in 1..{n}")]
    BadLearnSize { n_learn: usize, n: usize },
}

/// Tolerance on the total mass of a predictive distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Validated category distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution(Vec<f64>);

impl PredictiveDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, EvalError> {
        let ok = probs.len() >= 2
            && probs.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (probs.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE;
        if ok {
            Ok(Self(probs))
        } else {
            Err(EvalError::InvalidDistribution(probs))
        }
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn mode(&self) -> usize {
        predict_mode(&self.0)
    }

    pub fn median(&self) -> usize {
        predict_median(&self.0)
    }
}

/// Ranked probability score `sum_r (F(r) - 1{y <= r})^2` with `F` the
/// predicted cumulative distribution.
pub fn rps(probs: &[f64], y: usize) -> Result<f64, EvalError> {
    let d = PredictiveDistribution::new(probs.to_vec())?;
    if y < 1 || y > d.k() {
        return Err(EvalError::InvalidCategory { y, k: d.k() });
    }
    Ok(rps_unchecked(probs, y))
}

pub fn rps_unchecked(probs: &[f64], y: usize) -> f64 {
    let k = probs.len();
    let mut cum = 0.0;
    let mut total = 0.0;
    // the r = k term is (1 - 1)^2 = 0
    for (r, p) in probs[..k - 1].iter().enumerate() {
        cum += p;
        let ind = if y <= r + 1 { 1.0 } else { 0.0 };
        total += (cum - ind) * (cum - ind);
    }
    total
}

pub fn zero_one(y: usize, predicted: usize) -> u32 {
    u32::from(y != predicted)
}

pub fn class_distance(y: usize, predicted: usize) -> usize {
    y.abs_diff(predicted)
}

/// Most probable category; ties go to the smallest.
pub fn predict_mode(probs: &[f64]) -> usize {
    let mut best = 0;
    for (r, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = r;
        }
    }
    best + 1
}

/// Smallest category whose cumulative probability reaches one half.
pub fn predict_median(probs: &[f64]) -> usize {
    let mut cum = 0.0;
    for (r, p) in probs.iter().enumerate() {
        cum += p;
        if cum >= 0.5 {
            return r + 1;
        }
    }
    probs.len()
}

/// Mean losses of one method on one validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rps: f64,
    pub zero_one_mode: f64,
    pub zero_one_median: f64,
    pub distance_mode: f64,
    pub distance_median: f64,
    pub n_validation: usize,
}

impl Scores {
    /// Scores of `predictions` against `labels`.
    pub fn compute(predictions: &[Vec<f64>], labels: &[usize]) -> Scores {
        let n = labels.len() as f64;
        let (mut rps_sum, mut e_mode, mut e_med, mut d_mode, mut d_med) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, &y) in predictions.iter().zip(labels) {
            let mode = predict_mode(p);
            let median = predict_median(p);
            rps_sum += rps_unchecked(p, y);
            e_mode += f64::from(zero_one(y, mode));
            e_med += f64::from(zero_one(y, median));
            d_mode += class_distance(y, mode) as f64;
            d_med += class_distance(y, median) as f64;
        }
        Scores {
            rps: rps_sum / n,
            zero_one_mode: e_mode / n,
            zero_one_median: e_med / n,
            distance_mode: d_mode / n,
            distance_median: d_med / n,
            n_validation: labels.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n_repeats: usize,
    /// Learning-set size; `floor(2n/3)` when absent.
    pub n_learn: Option<usize>,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { n_repeats: 30, n_learn: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub repetition: usize,
    pub scores: Option<Scores>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub completed: usize,
    pub failed: usize,
    pub mean_rps: Option<f64>,
    pub mean_zero_one_mode: Option<f64>,
    pub mean_zero_one_median: Option<f64>,
    pub mean_distance_mode: Option<f64>,
    pub mean_distance_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n: usize,
    pub n_learn: usize,
    pub n_repeats: usize,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    /// Row-major by repetition, then method.
    pub cells: Vec<Cell>,
}

impl BenchmarkReport {
    pub fn cell(&self, method: &str, repetition: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method && c.repetition == repetition)
    }

    /// Per-repetition scores of `method`, `None` where it failed.
    pub fn scores(&self, method: &str) -> Vec<Option<&Scores>> {
        self.cells.iter().filter(|c| c.method == method).map(|c| c.scores.as_ref()).collect()
    }

    pub fn summary(&self) -> Vec<MethodSummary> {
        self.methods
            .iter()
            .map(|m| {
                let ok: Vec<&Scores> = self.scores(&m.name).into_iter().flatten().collect();
                let mean = |f: fn(&Scores) -> f64| {
                    (!ok.is_empty()).then(|| ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64)
                };
                MethodSummary {
                    method: m.name.clone(),
                    completed: ok.len(),
                    failed: self.n_repeats - ok.len(),
                    mean_rps: mean(|s| s.rps),
                    mean_zero_one_mode: mean(|s| s.zero_one_mode),
                    mean_zero_one_median: mean(|s| s.zero_one_median),
                    mean_distance_mode: mean(|s| s.distance_mode),
                    mean_distance_median: mean(|s| s.distance_median),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat table, one line per (repetition, method) cell. Failed cells have
    /// empty score fields and the error message in the last column.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "repetition",
            "rps",
            "zero_one_mode",
            "zero_one_median",
            "distance_mode",
            "distance_median",
            "n_validation",
            "error",
        ])
        .expect("in-memory write");
        for c in &self.cells {
            let mut rec = vec![c.method.clone(), c.repetition.to_string()];
            match &c.scores {
                Some(s) => rec.extend([
                    format!("{:?}", s.rps),
                    format!("{:?}", s.zero_one_mode),
                    format!("{:?}", s.zero_one_median),
                    format!("{:?}", s.distance_mode),
                    format!("{:?}", s.distance_median),
                    s.n_validation.to_string(),
                ]),
                None => rec.extend(std::iter::repeat(String::new()).take(6)),
            }
            rec.push(c.error.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Seed handed to every method in `repetition`. It does not depend on the
/// method, so identical specs produce identical cells.
pub fn repetition_method_seed(seed: u64, repetition: usize) -> u64 {
    derive_path(seed, &[repetition as u64, 1])
}

/// Learning/validation row indices of `repetition`.
pub fn repetition_split(seed: u64, repetition: usize, n: usize, n_learn: usize) -> (Vec<usize>, Vec<usize>) {
    split_rows(n, n_learn, &mut rng_from_seed(derive_path(seed, &[repetition as u64, 0])))
        .expect("learning-set size validated by caller")
}

/// Fits every method on the same learning set and scores it on the same
/// validation set, `n_repeats` times.
pub fn benchmark(
    dataset: &OrdinalDataset,
    methods: &[MethodSpec],
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport, EvalError> {
    if methods.is_empty() {
        return Err(EvalError::NoMethods);
    }
    let mut seen = std::collections::HashSet::new();
    for m in methods {
        if !seen.insert(m.name.as_str()) {
            return Err(EvalError::DuplicateMethod(m.name.clone()));
        }
    }
    if config.n_repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let n = dataset.n();
    let n_learn = config.n_learn.unwrap_or(2 * n / 3);
    if n_learn < 1 || n_learn >= n {
        return Err(EvalError::BadLearnSize { n_learn, n });
    }
    let jobs: Vec<(usize, usize)> =
        (0..config.n_repeats).flat_map(|rep| (0..methods.len()).map(move |j| (rep, j))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(rep, j)| {
            let (learn_rows, valid_rows) = repetition_split(config.seed, rep, n, n_learn);
            let learn = dataset.subset(&learn_rows);
            let valid = dataset.subset(&valid_rows);
            let outcome = methods[j]
                .method
                .fit(&learn, repetition_method_seed(config.seed, rep))
                .and_then(|model| model.predict_dataset(&valid))
                .map(|preds| Scores::compute(&preds, valid.response()));
            let (scores, error) = match outcome {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Cell { method: methods[j].name.clone(), repetition: rep, scores, error }
        })
        .collect();
    Ok(BenchmarkReport { n, n_learn, n_repeats: config.n_repeats, seed: config.seed, methods: methods.to_vec(), cells })
}
