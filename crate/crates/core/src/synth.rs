//! Synthetic ordinal data with a known conditional distribution.
//!
//! Covariates are uniform on `[-1, 1]^p`. A latent score `z = eta(x) + s*e`,
//! `e` standard logistic, is cut at increasing thresholds, so
//! `P(Y <= r | x) = F((theta_r - eta(x)) / s)`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{bin_response, FeatureMatrix, OrdinalDataset};
use crate::link::logistic;
use crate::rng::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("n must be at least 1")]
    EmptySample,
    #[error("k must be at least 2, got {0}")]
    TooFewCategories(usize),
    #[error("expected {expected} thresholds for k = {k}, got {found}")]
    ThresholdCount { expected: usize, found: usize, k: usize },
    #[error("thresholds must be finite and strictly increasing")]
    ThresholdOrder,
    #[error("beta has {found} entries but p = {p}")]
    BetaLength { found: usize, p: usize },
    #[error("the interaction regime needs p >= 2, got {0}")]
    InteractionDimension(usize),
    #[error("noise_scale must be finite and non-negative")]
    NoiseScale,
    #[error("spec regime is not {0}")]
    WrongRegime(&'static str),
    #[error("non-finite generator parameter")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `eta(x) = x' beta`; the proportional odds model is exactly correct.
    LatentLinear { beta: Vec<f64> },
    /// `eta(x) = sign(x_1) sign(x_2) strength`, with `sign(0) = 1`.
    Interaction { strength: f64 },
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub regime: Regime,
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub thresholds: Vec<f64>,
    /// Scale `s` of the logistic noise; 0 gives a deterministic response.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn latent_linear(n: usize, beta: Vec<f64>, thresholds: Vec<f64>, seed: u64) -> Self {
        Self {
            p: beta.len(),
            k: thresholds.len() + 1,
            regime: Regime::LatentLinear { beta },
            n,
            thresholds,
            noise_scale: 1.0,
            seed,
        }
    }

    pub fn interaction(n: usize, p: usize, strength: f64, thresholds: Vec<f64>, seed: u64) -> Self {
        Self {
            k: thresholds.len() + 1,
            regime: Regime::Interaction { strength },
            n,
            p,
            thresholds,
            noise_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 {
            return Err(SynthError::EmptySample);
        }
        if self.k < 2 {
            return Err(SynthError::TooFewCategories(self.k));
        }
        if self.thresholds.len() != self.k - 1 {
            return Err(SynthError::ThresholdCount { expected: self.k - 1, found: self.thresholds.len(), k: self.k });
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) || self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SynthError::ThresholdOrder);
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(SynthError::NoiseScale);
        }
        match &self.regime {
            Regime::LatentLinear { beta } => {
                if beta.len() != self.p {
                    return Err(SynthError::BetaLength { found: beta.len(), p: self.p });
                }
                if beta.iter().any(|b| !b.is_finite()) {
                    return Err(SynthError::NonFinite);
                }
            }
            Regime::Interaction { strength } => {
                if self.p < 2 {
                    return Err(SynthError::InteractionDimension(self.p));
                }
                if !strength.is_finite() {
                    return Err(SynthError::NonFinite);
                }
            }
        }
        Ok(())
    }

    /// Latent location `eta(x)`.
    pub fn location(&self, x: &[f64]) -> f64 {
        match &self.regime {
            Regime::LatentLinear { beta } => x.iter().zip(beta).map(|(a, b)| a * b).sum(),
            Regime::Interaction { strength } => sign(x[0]) * sign(x[1]) * strength,
        }
    }

    /// True `P(Y <= r | x)` for `r = 1..k-1`.
    pub fn true_cumulative(&self, x: &[f64]) -> Vec<f64> {
        let eta = self.location(x);
        self.thresholds
            .iter()
            .map(|&t| {
                if self.noise_scale > 0.0 {
                    logistic((t - eta) / self.noise_scale)
                } else if eta <= t {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// True `P(Y = r | x)` for `r = 1..k`.
    pub fn true_distribution(&self, x: &[f64]) -> Vec<f64> {
        let cum = self.true_cumulative(x);
        let mut out = Vec::with_capacity(self.k);
        let mut prev = 0.0;
        for c in cum {
            out.push((c - prev).max(0.0));
            prev = c;
        }
        out.push((1.0 - prev).max(0.0));
        out
    }
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn standard_logistic<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // open interval keeps the inverse CDF finite
    let u: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    (u / (1.0 - u)).ln()
}

fn draw_features<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> FeatureMatrix {
    let data: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    FeatureMatrix::new(n, p, data).expect("shape matches")
}

fn generate_with<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<OrdinalDataset, SynthError> {
    spec.validate()?;
    // all covariates first, so both regimes share the covariate draw path
    let features = draw_features(spec.n, spec.p, rng);
    let response: Vec<usize> = (0..spec.n)
        .map(|i| {
            let z = spec.location(features.row(i)) + spec.noise_scale * standard_logistic(rng);
            bin_response(z, &spec.thresholds)
        })
        .collect();
    Ok(OrdinalDataset::from_parts(features, response, spec.k).expect("generated data is valid"))
}

pub fn generate_latent_linear<R: Rng + ?Sized>(
    spec: &GeneratorSpec,
    rng: &mut R,
) -> Result<OrdinalDataset, SynthError> {
    if !matches!(spec.regime, Regime::LatentLinear { .. }) {
        return Err(SynthError::WrongRegime("latent_linear"));
    }
    generate_with(spec, rng)
}

pub fn generate_interaction<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<OrdinalDataset, SynthError> {
    if !matches!(spec.regime, Regime::Interaction { .. }) {
        return Err(SynthError::WrongRegime("interaction"));
    }
    generate_with(spec, rng)
}

/// Dataset drawn from `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<OrdinalDataset, SynthError> {
    generate_with(spec, &mut rng_from_seed(spec.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

/// Expected RPS of the true conditional distribution. The expectation over
/// `Y | x` is exact (`sum_r G_r (1 - G_r)` with `G` the true cumulative
/// distribution); only `x` is sampled.
pub fn bayes_rps<R: RngCore + ?Sized>(
    spec: &GeneratorSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate, SynthError> {
    spec.validate()?;
    if n_mc == 0 {
        return Err(SynthError::EmptySample);
    }
    let features = draw_features(n_mc, spec.p, rng);
    let values: Vec<f64> =
        features.rows().map(|x| spec.true_cumulative(x).iter().map(|g| g * (1.0 - g)).sum()).collect();
    let mean = values.iter().sum::<f64>() / n_mc as f64;
    let std_error = if n_mc > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_mc - 1) as f64;
        (var / n_mc as f64).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate { mean, std_error, n_mc })
}
