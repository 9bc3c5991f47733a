//! Ordinal forests: random-forest and parametric models for ordinal
//! responses, built from binary probability forests on split variables.
//!
//! Two forest constructions are provided. The split-based forest estimates
//! `P(Y >= r | x)` for every cut `r`, makes the estimates monotone and
//! differences them. The adjacent-categories forest estimates
//! `P(Y >= r | x, Y in {r-1, r})` and combines the log-odds into class
//! probabilities. Proportional-odds and adjacent-categories logit models,
//! performance-weighted ensembles, ranked probability scoring, a repeated
//! split benchmark and synthetic generators complete the crate.

pub mod data;
pub mod ensemble;
pub mod evaluation;
pub mod forest;
pub mod isotonic;
pub mod link;
pub mod model;
pub mod ordinal;
pub mod parametric;
pub mod rng;
pub mod synth;

pub use data::{DataError, DatasetSchema, FeatureMatrix, OrdinalDataset};
pub use ensemble::{fit_ensemble, optimize_simplex_weights, EnsembleConfig, EnsembleError, EnsembleModel};
pub use evaluation::{benchmark, rps, BenchmarkConfig, BenchmarkReport, EvalError};
pub use forest::{fit_forest, BinaryForest, ForestConfig, ForestError};
pub use isotonic::{pava_decreasing, IsotonicError};
pub use model::{FittedModel, Method, MethodSpec, ModelIoError};
pub use ordinal::{fit_adjcat_forest, fit_split_based, AdjCatForest, ImportanceKind, SplitBasedForest};
pub use parametric::{fit_adjacent, fit_prop_odds, AdjCatModel, FitError, PropOddsModel};
pub use synth::{GeneratorSpec, Regime, SynthError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Isotonic(#[from] IsotonicError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model has {expected} categories but the data has {found}")]
    CategoryMismatch { expected: usize, found: usize },
}
