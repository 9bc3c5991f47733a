//! Method specifications, the fitted-model sum type, and the versioned JSON
//! envelope shared by every serialized model.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::OrdinalDataset;
use crate::ensemble::{fit_ensemble, EnsembleConfig, EnsembleModel};
use crate::forest::ForestConfig;
use crate::ordinal::{fit_adjcat_forest, fit_split_based, AdjCatForest, SplitBasedForest};
use crate::parametric::{fit_adjacent, fit_prop_odds, AdjCatModel, PropOddsModel};
use crate::rng::rng_from_seed;

pub const FORMAT_NAME: &str = "ordforest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a `{expected}` document, found `{found}`")]
    WrongKind { expected: String, found: String },
    #[error(
        "unsupported format `{format}` version {version} (this build reads `{FORMAT_NAME}` version {FORMAT_VERSION})"
    )]
    UnsupportedVersion { format: String, version: u32 },
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    model: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

pub fn to_versioned_json<T: Serialize>(kind: &str, model: &T) -> String {
    let env = EnvelopeRef { format: FORMAT_NAME, version: FORMAT_VERSION, kind, model };
    serde_json::to_string_pretty(&env).expect("models serialize infallibly")
}

pub fn from_versioned_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, ModelIoError> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
        kind: String,
    }
    let header: Header = serde_json::from_str(text)?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion { format: header.format, version: header.version });
    }
    if header.kind != kind {
        return Err(ModelIoError::WrongKind { expected: kind.to_string(), found: header.kind });
    }
    let env: Envelope<T> = serde_json::from_str(text)?;
    debug_assert_eq!((env.format.as_str(), env.version, env.kind.as_str()), (FORMAT_NAME, FORMAT_VERSION, kind));
    Ok(env.model)
}

/// A fitting method. Tags follow the benchmark roster: `pom`, `adj`,
/// `rfsplit`, `rfadj`, `ens`, plus the `uniform` reference forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    #[serde(alias = "prop_odds")]
    Pom,
    #[serde(alias = "adjacent")]
    Adj,
    #[serde(alias = "split_based_rf")]
    Rfsplit(ForestConfig),
    #[serde(alias = "adjcat_rf")]
    Rfadj(ForestConfig),
    Ens(EnsembleConfig),
    Uniform,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Pom => "pom",
            Method::Adj => "adj",
            Method::Rfsplit(_) => "rfsplit",
            Method::Rfadj(_) => "rfadj",
            Method::Ens(_) => "ens",
            Method::Uniform => "uniform",
        }
    }

    /// Fits on `dataset`; `seed` replaces any seed carried by the method's
    /// own configuration.
    pub fn fit(&self, dataset: &OrdinalDataset, seed: u64) -> Result<FittedModel, crate::Error> {
        Ok(match self {
            Method::Pom => FittedModel::PropOdds(fit_prop_odds(dataset)?),
            Method::Adj => FittedModel::Adjacent(fit_adjacent(dataset)?),
            Method::Rfsplit(cfg) => FittedModel::SplitBased(fit_split_based(dataset, &cfg.with_seed(seed))?),
            Method::Rfadj(cfg) => FittedModel::AdjCat(fit_adjcat_forest(dataset, &cfg.with_seed(seed))?),
            Method::Ens(cfg) => FittedModel::Ensemble(Box::new(fit_ensemble(dataset, cfg, &mut rng_from_seed(seed))?)),
            Method::Uniform => FittedModel::Uniform { k: dataset.k(), n_features: dataset.p() },
        })
    }
}

/// A method with a display name, unique within a roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(flatten)]
    pub method: Method,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, method: Method) -> Self {
        Self { name: name.into(), method }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedModel {
    PropOdds(PropOddsModel),
    Adjacent(AdjCatModel),
    SplitBased(SplitBasedForest),
    AdjCat(AdjCatForest),
    Ensemble(Box<EnsembleModel>),
    Uniform { k: usize, n_features: usize },
}

impl FittedModel {
    pub fn k(&self) -> usize {
        match self {
            FittedModel::PropOdds(m) => m.k(),
            FittedModel::Adjacent(m) => m.k(),
            FittedModel::SplitBased(m) => m.k(),
            FittedModel::AdjCat(m) => m.k(),
            FittedModel::Ensemble(m) => m.k(),
            FittedModel::Uniform { k, .. } => *k,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::PropOdds(m) => m.p(),
            FittedModel::Adjacent(m) => m.p(),
            FittedModel::SplitBased(m) => m.n_features(),
            FittedModel::AdjCat(m) => m.n_features(),
            FittedModel::Ensemble(m) => m.n_features(),
            FittedModel::Uniform { n_features, .. } => *n_features,
        }
    }

    /// Predicted category distribution at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, crate::Error> {
        Ok(match self {
            FittedModel::PropOdds(m) => m.predict(x)?,
            FittedModel::Adjacent(m) => m.predict(x)?,
            FittedModel::SplitBased(m) => m.predict(x)?,
            FittedModel::AdjCat(m) => m.predict(x)?,
            FittedModel::Ensemble(m) => m.predict(x)?,
            FittedModel::Uniform { k, n_features } => {
                if x.len() != *n_features {
                    return Err(crate::Error::DimensionMismatch { expected: *n_features, found: x.len() });
                }
                vec![1.0 / *k as f64; *k]
            }
        })
    }

    /// Predictions for every row of `dataset`.
    pub fn predict_dataset(&self, dataset: &OrdinalDataset) -> Result<Vec<Vec<f64>>, crate::Error> {
        use rayon::prelude::*;
        if dataset.k() != self.k() {
            return Err(crate::Error::CategoryMismatch { expected: self.k(), found: dataset.k() });
        }
        (0..dataset.n()).into_par_iter().map(|i| self.predict(dataset.row(i))).collect()
    }

    pub fn to_json(&self) -> String {
        to_versioned_json("model", self)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelIoError> {
        from_versioned_json("model", text)
    }
}
