//! Maximum-likelihood ordinal regression: the proportional odds (cumulative
//! logit) model and the adjacent-categories logit model.
//!
//! Both families share one linear predictor `x'β` and differ in how the
//! intercepts `β_{02}, …, β_{0k}` enter. Parameters are laid out as
//! `[β_{02}, …, β_{0k}, β_1, …, β_p]`.
//!
//! Fitting is Newton–Raphson with step halving on internally standardized
//! features; coefficients are mapped back to the original feature scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureMatrix, OrdinalDataset};
use crate::link::{adjacent_logits_to_probs, cumulative_logits_to_probs, logistic};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PropOdds,
    Adjacent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub loglik: f64,
    /// Max-norm of the score at the returned point (standardized scale).
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each accepted step, starting value first.
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("category {0} is never observed")]
    UnobservedCategory(usize),
    #[error("Newton-Raphson did not converge after {} iterations (gradient max-norm {:e})", .0.iterations, .0.gradient_norm)]
    NotConverged(Box<FitDiagnostics>),
    #[error("fitted intercepts violate the required ordering (quasi-separation?): {0:?}")]
    InterceptOrdering(Vec<f64>),
    #[error("parameter vector has length {found}, expected {expected}")]
    ParameterLength { expected: usize, found: usize },
    #[error("parameters lie outside the valid region (cumulative intercepts must decrease)")]
    InvalidParameters,
    #[error("dimension mismatch: model has {expected} features, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

macro_rules! parametric_model {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            /// `β_{0r}` for `r = 2..=k`.
            pub intercepts: Vec<f64>,
            pub coefficients: Vec<f64>,
            pub diagnostics: FitDiagnostics,
        }

        impl $name {
            pub fn k(&self) -> usize {
                self.intercepts.len() + 1
            }

            pub fn p(&self) -> usize {
                self.coefficients.len()
            }

            fn linear(&self, x: &[f64]) -> Result<f64, FitError> {
                if x.len() != self.p() {
                    return Err(FitError::DimensionMismatch { expected: self.p(), found: x.len() });
                }
                Ok(dot(x, &self.coefficients))
            }
        }
    };
}

parametric_model!(PropOddsModel, "Cumulative logit model `P(Y >= r | x) = F(β_{0r} + x'β)`.");
parametric_model!(AdjCatModel, "Adjacent-categories model `P(Y = r | Y ∈ {r-1, r}, x) = F(β_{0r} + x'β)`.");

impl PropOddsModel {
    /// `P(Y >= r | x)` for `r = 2..=k`.
    pub fn cumulative(&self, x: &[f64]) -> Result<Vec<f64>, FitError> {
        let lin = self.linear(x)?;
        Ok(self.intercepts.iter().map(|a| logistic(a + lin)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, FitError> {
        let lin = self.linear(x)?;
        let etas: Vec<f64> = self.intercepts.iter().map(|a| a + lin).collect();
        Ok(cumulative_logits_to_probs(&etas))
    }
}

impl AdjCatModel {
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, FitError> {
        let lin = self.linear(x)?;
        let etas: Vec<f64> = self.intercepts.iter().map(|a| a + lin).collect();
        Ok(adjacent_logits_to_probs(&etas))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Evaluation {
    loglik: f64,
    gradient: Vec<f64>,
    hessian: Option<DMatrix<f64>>,
}

/// Log-likelihood, score and (optionally) Hessian. `None` when some observed
/// cell has non-positive probability.
fn evaluate(
    family: Family,
    params: &[f64],
    x: &FeatureMatrix,
    y: &[usize],
    k: usize,
    with_hessian: bool,
) -> Option<Evaluation> {
    let m = k - 1;
    let q = params.len();
    let (alpha, beta) = params.split_at(m);
    let mut loglik = 0.0;
    let mut gradient = vec![0.0; q];
    let mut hessian = with_hessian.then(|| DMatrix::<f64>::zeros(q, q));
    let mut jac = vec![vec![0.0; q]; k];
    let mut mean_jac = vec![0.0; q];
    for (i, &yi) in y.iter().enumerate() {
        let row = x.row(i);
        let lin = dot(row, beta);
        match family {
            Family::PropOdds => {
                // (alpha index, d log pi / d eta) for the one or two cumulative
                // logits the observed cell depends on
                let r = yi;
                let upper = (r >= 2).then(|| r - 2);
                let lower = (r <= m).then(|| r - 1);
                let eta_u = upper.map(|u| alpha[u] + lin);
                let eta_l = lower.map(|l| alpha[l] + lin);
                let pi = match (eta_u, eta_l) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            return None;
                        }
                        logistic(a) * logistic(-b) * -(b - a).exp_m1()
                    }
                    (Some(a), None) => logistic(a),
                    (None, Some(b)) => logistic(-b),
                    (None, None) => unreachable!("k >= 2"),
                };
                if !(pi > 0.0) {
                    return None;
                }
                loglik += pi.ln();
                let da = eta_u.map_or(0.0, |a| logistic(a) * logistic(-a));
                let db = eta_l.map_or(0.0, |b| logistic(b) * logistic(-b));
                let gu = da / pi;
                let gl = -db / pi;
                let mut add_grad = |idx: usize, g: f64| {
                    gradient[idx] += g;
                    for (j, &v) in row.iter().enumerate() {
                        gradient[m + j] += g * v;
                    }
                };
                if let Some(u) = upper {
                    add_grad(u, gu);
                }
                if let Some(l) = lower {
                    add_grad(l, gl);
                }
                if let Some(h) = hessian.as_mut() {
                    let huu = eta_u.map_or(0.0, |a| da * (logistic(-a) - logistic(a)) / pi) - gu * gu;
                    let hll = eta_l.map_or(0.0, |b| -db * (logistic(-b) - logistic(b)) / pi) - gl * gl;
                    let hul = -gu * gl;
                    let entries = [(upper, upper, huu), (lower, lower, hll), (upper, lower, hul), (lower, upper, hul)];
                    for (a, b, w) in entries {
                        if let (Some(a), Some(b)) = (a, b) {
                            add_outer(h, m, a, b, row, w);
                        }
                    }
                }
            }
            Family::Adjacent => {
                let mut scores = Vec::with_capacity(k);
                scores.push(0.0);
                let mut acc = 0.0;
                for (r, a) in alpha.iter().enumerate() {
                    acc += a;
                    scores.push(acc + (r + 1) as f64 * lin);
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                if !lse.is_finite() {
                    return None;
                }
                loglik += scores[yi - 1] - lse;
                let probs: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
                // jac[r] = d score_r / d params
                mean_jac.iter_mut().for_each(|v| *v = 0.0);
                for (r, j) in jac.iter_mut().enumerate() {
                    for (s, v) in j[..m].iter_mut().enumerate() {
                        *v = if s < r { 1.0 } else { 0.0 };
                    }
                    for (c, v) in j[m..].iter_mut().enumerate() {
                        *v = r as f64 * row[c];
                    }
                    for (mv, jv) in mean_jac.iter_mut().zip(j.iter()) {
                        *mv += probs[r] * jv;
                    }
                }
                for (gv, (jv, mv)) in gradient.iter_mut().zip(jac[yi - 1].iter().zip(&mean_jac)) {
                    *gv += jv - mv;
                }
                if let Some(h) = hessian.as_mut() {
                    for (r, j) in jac.iter().enumerate() {
                        let w = probs[r];
                        for a in 0..q {
                            for b in 0..q {
                                h[(a, b)] -= w * j[a] * j[b];
                            }
                        }
                    }
                    for a in 0..q {
                        for b in 0..q {
                            h[(a, b)] += mean_jac[a] * mean_jac[b];
                        }
                    }
                }
            }
        }
    }
    loglik.is_finite().then_some(Evaluation { loglik, gradient, hessian })
}

/// Adds `w * e_a e_b'` where `e_r` is the derivative of the `r`-th linear
/// predictor (unit intercept plus the feature row).
fn add_outer(h: &mut DMatrix<f64>, m: usize, a: usize, b: usize, row: &[f64], w: f64) {
    h[(a, b)] += w;
    for (j, &v) in row.iter().enumerate() {
        h[(a, m + j)] += w * v;
        h[(m + j, b)] += w * v;
        for (l, &u) in row.iter().enumerate() {
            h[(m + j, m + l)] += w * v * u;
        }
    }
}

/// Log-likelihood and analytic score of `family` at `params` (original,
/// unstandardized parametrization).
pub fn loglik_and_gradient(
    family: Family,
    params: &[f64],
    dataset: &OrdinalDataset,
) -> Result<(f64, Vec<f64>), FitError> {
    let expected = dataset.k() - 1 + dataset.p();
    if params.len() != expected {
        return Err(FitError::ParameterLength { expected, found: params.len() });
    }
    let e = evaluate(family, params, dataset.features(), dataset.response(), dataset.k(), false)
        .ok_or(FitError::InvalidParameters)?;
    Ok((e.loglik, e.gradient))
}

struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    fn new(x: &FeatureMatrix) -> Self {
        let n = x.n_rows() as f64;
        let (means, scales) = (0..x.n_cols())
            .map(|j| {
                let mean = x.column(j).sum::<f64>() / n;
                let var = x.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                (mean, if sd > 1e-12 { sd } else { 1.0 })
            })
            .unzip();
        Self { means, scales }
    }

    fn apply(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut z = x.clone();
        for i in 0..z.n_rows() {
            for j in 0..z.n_cols() {
                z.set(i, j, (x.get(i, j) - self.means[j]) / self.scales[j]);
            }
        }
        z
    }

    /// Maps standardized-scale parameters back to the original scale.
    fn unscale(&self, params: &[f64], m: usize) -> Vec<f64> {
        let beta: Vec<f64> = params[m..].iter().zip(&self.scales).map(|(b, s)| b / s).collect();
        let shift = dot(&beta, &self.means);
        params[..m].iter().map(|a| a - shift).chain(beta).collect()
    }
}

fn starting_values(family: Family, counts: &[usize], p: usize) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let k = counts.len();
    let intercepts: Vec<f64> = match family {
        Family::PropOdds => (2..=k)
            .map(|r| {
                let at_least: usize = counts[r - 1..].iter().sum();
                (at_least as f64 / (n - at_least) as f64).ln()
            })
            .collect(),
        Family::Adjacent => (2..=k).map(|r| (counts[r - 1] as f64 / counts[r - 2] as f64).ln()).collect(),
    };
    intercepts.into_iter().chain(std::iter::repeat(0.0).take(p)).collect()
}

fn newton(family: Family, x: &FeatureMatrix, y: &[usize], k: usize, start: Vec<f64>) -> (Vec<f64>, FitDiagnostics) {
    let mut params = start;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut current = evaluate(family, &params, x, y, k, true).expect("starting values lie in the valid region");
    trace.push(current.loglik);
    loop {
        let gnorm = current.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < GRADIENT_TOLERANCE || iterations >= MAX_ITERATIONS {
            let diagnostics = FitDiagnostics {
                loglik: current.loglik,
                gradient_norm: gnorm,
                iterations,
                converged: gnorm < GRADIENT_TOLERANCE,
                loglik_trace: trace,
            };
            return (params, diagnostics);
        }
        iterations += 1;
        let g = DVector::from_column_slice(&current.gradient);
        let neg_h = -current.hessian.take().expect("hessian requested");
        let direction = match neg_h.cholesky() {
            Some(chol) => chol.solve(&g),
            None => &g / g.amax().max(1.0),
        };
        let predicted_gain = g.dot(&direction);
        // below this the log-likelihood cannot resolve the improvement, so a
        // full step is taken without comparison
        let resolution = 1e-12 * current.loglik.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = params.iter().zip(direction.iter()).map(|(p, d)| p + step * d).collect();
            if let Some(e) = evaluate(family, &candidate, x, y, k, true) {
                if e.loglik >= current.loglik || (predicted_gain.abs() < resolution && step == 1.0) {
                    accepted = Some((candidate, e));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, e)) => {
                params = p;
                trace.push(e.loglik);
                current = e;
            }
            None => {
                let diagnostics = FitDiagnostics {
                    loglik: current.loglik,
                    gradient_norm: gnorm,
                    iterations,
                    converged: false,
                    loglik_trace: trace,
                };
                return (params, diagnostics);
            }
        }
    }
}

fn fit(family: Family, dataset: &OrdinalDataset) -> Result<(Vec<f64>, Vec<f64>, FitDiagnostics), FitError> {
    let counts = dataset.category_counts();
    if let Some(r) = counts.iter().position(|&c| c == 0) {
        return Err(FitError::UnobservedCategory(r + 1));
    }
    let k = dataset.k();
    let m = k - 1;
    let standardizer = Standardizer::new(dataset.features());
    let z = standardizer.apply(dataset.features());
    let start = starting_values(family, &counts, dataset.p());
    let (params, diagnostics) = newton(family, &z, dataset.response(), k, start);
    if !diagnostics.converged {
        return Err(FitError::NotConverged(Box::new(diagnostics)));
    }
    let params = standardizer.unscale(&params, m);
    let (intercepts, coefficients) = params.split_at(m);
    Ok((intercepts.to_vec(), coefficients.to_vec(), diagnostics))
}

pub fn fit_prop_odds(dataset: &OrdinalDataset) -> Result<PropOddsModel, FitError> {
    let (intercepts, coefficients, diagnostics) = fit(Family::PropOdds, dataset)?;
    if intercepts.windows(2).any(|w| w[0] < w[1]) {
        return Err(FitError::InterceptOrdering(intercepts));
    }
    Ok(PropOddsModel { intercepts, coefficients, diagnostics })
}

pub fn fit_adjacent(dataset: &OrdinalDataset) -> Result<AdjCatModel, FitError> {
    let (intercepts, coefficients, diagnostics) = fit(Family::Adjacent, dataset)?;
    Ok(AdjCatModel { intercepts, coefficients, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn dataset(rows: Vec<Vec<f64>>, y: Vec<usize>, k: usize) -> OrdinalDataset {
        OrdinalDataset::from_parts(FeatureMatrix::from_rows(&rows).unwrap(), y, k).unwrap()
    }

    fn random_dataset(n: usize, p: usize, k: usize, seed: u64) -> OrdinalDataset {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = (0..n)
            .map(|i| {
                let s: f64 = rows[i].iter().sum::<f64>() + rng.gen_range(-1.5..1.5);
                (((s + 2.5) / 5.0 * k as f64).floor() as usize).clamp(0, k - 1) + 1
            })
            .collect();
        dataset(rows, y, k)
    }

    fn finite_difference(family: Family, params: &[f64], d: &OrdinalDataset) -> Vec<f64> {
        let h = 1e-5;
        (0..params.len())
            .map(|j| {
                let mut up = params.to_vec();
                let mut down = params.to_vec();
                up[j] += h;
                down[j] -= h;
                let (lu, _) = loglik_and_gradient(family, &up, d).unwrap();
                let (ld, _) = loglik_and_gradient(family, &down, d).unwrap();
                (lu - ld) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = random_dataset(60, 2, 4, 1);
        let mut rng = rng_from_seed(2);
        for family in [Family::PropOdds, Family::Adjacent] {
            for _ in 0..20 {
                let mut params: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if family == Family::PropOdds {
                    params[..3].sort_by(|a, b| b.total_cmp(a));
                    params[1] -= 0.1;
                    params[2] -= 0.2;
                }
                let (_, g) = loglik_and_gradient(family, &params, &d).unwrap();
                let fd = finite_difference(family, &params, &d);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() / b.abs().max(1.0) < 1e-4, "{family:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let d = random_dataset(40, 2, 3, 3);
        for family in [Family::PropOdds, Family::Adjacent] {
            let params = vec![0.8, -0.4, 0.5, -0.3];
            let e = evaluate(family, &params, d.features(), d.response(), 3, true).unwrap();
            let h = e.hessian.unwrap();
            for j in 0..4 {
                let mut up = params.clone();
                let mut down = params.clone();
                up[j] += 1e-6;
                down[j] -= 1e-6;
                let gu = evaluate(family, &up, d.features(), d.response(), 3, false).unwrap().gradient;
                let gd = evaluate(family, &down, d.features(), d.response(), 3, false).unwrap().gradient;
                for i in 0..4 {
                    let fd = (gu[i] - gd[i]) / 2e-6;
                    assert!((h[(i, j)] - fd).abs() < 1e-4 * fd.abs().max(1.0), "{family:?} H[{i},{j}]");
                }
            }
        }
    }

    #[test]
    fn intercept_only_reproduces_empirical_distribution() {
        let y = vec![1, 1, 2, 3, 3, 3, 2, 1, 3, 3];
        let d = OrdinalDataset::from_parts(FeatureMatrix::new(10, 0, vec![]).unwrap(), y, 3).unwrap();
        let po = fit_prop_odds(&d).unwrap();
        let cum = po.cumulative(&[]).unwrap();
        assert!((cum[0] - 0.7).abs() < 1e-8 && (cum[1] - 0.5).abs() < 1e-8);
        let adj = fit_adjacent(&d).unwrap();
        let probs = adj.predict(&[]).unwrap();
        for (a, b) in probs.iter().zip([0.3, 0.2, 0.5]) {
            assert!((a - b).abs() < 1e-8);
        }
        let marginal = po.predict(&[]).unwrap();
        for (a, b) in marginal.iter().zip([0.3, 0.2, 0.5]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn loglik_never_decreases() {
        for seed in 0..5 {
            let d = random_dataset(200, 3, 4, seed);
            for fam in [Family::PropOdds, Family::Adjacent] {
                let diag = match fam {
                    Family::PropOdds => fit_prop_odds(&d).unwrap().diagnostics,
                    Family::Adjacent => fit_adjacent(&d).unwrap().diagnostics,
                };
                assert!(diag.converged && diag.gradient_norm < GRADIENT_TOLERANCE);
                for w in diag.loglik_trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{:?}", diag.loglik_trace);
                }
            }
        }
    }

    #[test]
    fn fitted_loglik_matches_original_scale_evaluation() {
        let d = random_dataset(150, 2, 3, 9);
        let m = fit_prop_odds(&d).unwrap();
        let params: Vec<f64> = m.intercepts.iter().chain(&m.coefficients).copied().collect();
        let (ll, g) = loglik_and_gradient(Family::PropOdds, &params, &d).unwrap();
        assert!((ll - m.diagnostics.loglik).abs() < 1e-9);
        assert!(g.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn prediction_properties() {
        let m = PropOddsModel {
            intercepts: vec![0.0],
            coefficients: vec![0.0, 0.0],
            diagnostics: FitDiagnostics {
                loglik: 0.0,
                gradient_norm: 0.0,
                iterations: 0,
                converged: true,
                loglik_trace: vec![],
            },
        };
        assert_eq!(m.predict(&[3.0, -1.0]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(m.predict(&[1.0]), Err(FitError::DimensionMismatch { .. })));
        let tail = PropOddsModel { intercepts: vec![1.0, 0.0, -1.0], coefficients: vec![1.0], ..m.clone() };
        let p = tail.predict(&[31.0]).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-9);
        let adj = AdjCatModel { intercepts: vec![0.0, 0.0], coefficients: vec![1.0], diagnostics: m.diagnostics };
        assert!(adj.predict(&[0.0]).unwrap().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let adj = AdjCatModel { intercepts: vec![2f64.ln(), 3f64.ln()], ..adj };
        let p = adj.predict(&[0.0]).unwrap();
        for (a, b) in p.iter().zip([1.0 / 9.0, 2.0 / 9.0, 6.0 / 9.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // shifting x'β upward moves mass to higher categories
        let low = adj.predict(&[0.0]).unwrap();
        let high = adj.predict(&[1.0]).unwrap();
        let (mut cl, mut ch) = (0.0, 0.0);
        for r in 0..3 {
            cl += low[r];
            ch += high[r];
            assert!(ch <= cl + 1e-15);
        }
    }

    #[test]
    fn unobserved_category_is_rejected() {
        let d = dataset(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1, 1, 3], 3);
        assert_eq!(fit_prop_odds(&d), Err(FitError::UnobservedCategory(2)));
        assert_eq!(fit_adjacent(&d), Err(FitError::UnobservedCategory(2)));
    }

    #[test]
    fn separated_data_diverges_or_is_flagged() {
        // the MLE does not exist; the gradient may still fall below tolerance
        // once the slope is large enough
        let d =
            dataset((0..10).map(|i| vec![i as f64]).collect(), (0..10).map(|i| 1 + usize::from(i >= 5)).collect(), 2);
        match fit_prop_odds(&d) {
            Err(FitError::NotConverged(_)) => {}
            Ok(m) => assert!(m.coefficients[0] > 10.0, "{:?}", m.coefficients),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn tiny_adjacent_fit_beats_grid() {
        let d = dataset(
            vec![vec![-1.0], vec![0.5], vec![0.0], vec![1.0], vec![-0.5], vec![2.0]],
            vec![1, 1, 2, 2, 3, 3],
            3,
        );
        let m = fit_adjacent(&d).unwrap();
        let best: Vec<f64> = m.intercepts.iter().chain(&m.coefficients).copied().collect();
        let (ll, _) = loglik_and_gradient(Family::Adjacent, &best, &d).unwrap();
        let grid: Vec<f64> = (0..21).map(|i| -5.0 + 0.5 * i as f64).collect();
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let (v, _) = loglik_and_gradient(Family::Adjacent, &[a, b, c], &d).unwrap();
                    assert!(ll >= v - 1e-12);
                }
            }
        }
    }
}
