//! Performance-weighted probability ensembles.
//!
//! Weights are chosen on pooled inner validation splits of the learning set:
//! every member is fitted on an inner training part, its predicted
//! distributions on the inner validation part are pooled over repeats, and
//! the simplex weights minimizing the mean ranked probability score of the
//! mixture are selected. Members are then refitted on the whole learning set.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split_rows, OrdinalDataset};
use crate::forest::ForestConfig;
use crate::model::{FittedModel, Method, MethodSpec};
use crate::rng::{derive_path, rng_from_seed};

pub const EG_ITERATIONS: usize = 500;
pub const EG_STEP: f64 = 1.0;
/// Largest member count for which every support set is polished exactly.
const MAX_POLISH_MEMBERS: usize = 12;
const REFIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one member")]
    NoMembers,
    #[error("member name `{0}` is used twice")]
    DuplicateMember(String),
    #[error("member `{0}` is itself an ensemble")]
    NestedEnsemble(String),
    #[error("inner splits need at least 10 rows, got {0}")]
    TooFewRows(usize),
    #[error("inner_fraction {0} leaves an empty inner training or validation set")]
    BadFraction(f64),
    #[error("inner_repeats must be at least 1")]
    NoRepeats,
    #[error("every member failed: {0:?}")]
    AllMembersFailed(Vec<(String, String)>),
    #[error("member probability tables disagree in shape")]
    ShapeMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: Vec<MethodSpec>,
    pub inner_repeats: usize,
    pub inner_fraction: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { members: Vec::new(), inner_repeats: 5, inner_fraction: 0.75 }
    }
}

impl EnsembleConfig {
    pub fn new(members: Vec<MethodSpec>) -> Self {
        Self { members, ..Self::default() }
    }

    /// Proportional odds model plus both ordinal forests.
    pub fn ens3(forest: &ForestConfig) -> Self {
        Self::new(vec![
            MethodSpec::new("pom", Method::Pom),
            MethodSpec::new("rfsplit", Method::Rfsplit(forest.clone())),
            MethodSpec::new("rfadj", Method::Rfadj(forest.clone())),
        ])
    }

    /// Both parametric models, both ordinal forests, and an adjacent-categories
    /// forest with larger leaves and all features tried at each split.
    pub fn ens5(forest: &ForestConfig) -> Self {
        let smooth = ForestConfig { min_node_size: forest.min_node_size * 4, mtry: None, ..forest.clone() };
        Self::new(vec![
            MethodSpec::new("pom", Method::Pom),
            MethodSpec::new("adj", Method::Adj),
            MethodSpec::new("rfsplit", Method::Rfsplit(forest.clone())),
            MethodSpec::new("rfadj", Method::Rfadj(forest.clone())),
            MethodSpec::new("rfadj_smooth", Method::Rfadj(smooth)),
        ])
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.members {
            if !seen.insert(m.name.as_str()) {
                return Err(EnsembleError::DuplicateMember(m.name.clone()));
            }
            if matches!(m.method, Method::Ens(_)) {
                return Err(EnsembleError::NestedEnsemble(m.name.clone()));
            }
        }
        if self.inner_repeats == 0 {
            return Err(EnsembleError::NoRepeats);
        }
        if !(self.inner_fraction > 0.0 && self.inner_fraction < 1.0) {
            return Err(EnsembleError::BadFraction(self.inner_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub name: String,
    pub method: Method,
    /// `None` when the member failed and carries zero weight.
    pub model: Option<FittedModel>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDiagnostics {
    /// Pooled inner-validation mean RPS of each member (`None` if it failed).
    pub member_rps: Vec<Option<f64>>,
    /// Pooled inner-validation mean RPS of the weighted mixture.
    pub mixture_rps: f64,
    pub pooled_rows: usize,
    /// `(member name, error)` for members dropped from the ensemble.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    k: usize,
    n_features: usize,
    members: Vec<EnsembleMember>,
    diagnostics: EnsembleDiagnostics,
}

impl EnsembleModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.weight).collect()
    }

    pub fn diagnostics(&self) -> &EnsembleDiagnostics {
        &self.diagnostics
    }

    /// Weighted mixture of the member distributions.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, crate::Error> {
        if x.len() != self.n_features {
            return Err(crate::Error::DimensionMismatch { expected: self.n_features, found: x.len() });
        }
        let mut out = vec![0.0; self.k];
        for m in &self.members {
            if let (Some(model), w) = (&m.model, m.weight) {
                if w == 0.0 {
                    continue;
                }
                for (o, p) in out.iter_mut().zip(model.predict(x)?) {
                    *o += w * p;
                }
            }
        }
        Ok(out)
    }
}

/// Fits an ensemble on `dataset`. All randomness derives from one draw of
/// `rng`.
pub fn fit_ensemble<R: RngCore + ?Sized>(
    dataset: &OrdinalDataset,
    config: &EnsembleConfig,
    rng: &mut R,
) -> Result<EnsembleModel, crate::Error> {
    config.validate()?;
    let n = dataset.n();
    if n < 10 {
        return Err(EnsembleError::TooFewRows(n).into());
    }
    let n_inner = (config.inner_fraction * n as f64).floor() as usize;
    if n_inner < 1 || n_inner >= n {
        return Err(EnsembleError::BadFraction(config.inner_fraction).into());
    }
    let base = rng.next_u64();
    let n_members = config.members.len();

    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..config.inner_repeats)
        .map(|rep| split_rows(n, n_inner, &mut rng_from_seed(derive_path(base, &[rep as u64, 0]))))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.inner_repeats).flat_map(|rep| (0..n_members).map(move |j| (rep, j))).collect();
    let outcomes: Vec<Result<Vec<Vec<f64>>, String>> = jobs
        .par_iter()
        .map(|&(rep, j)| {
            let (train, valid) = &splits[rep];
            let seed = derive_path(base, &[rep as u64, 1, j as u64]);
            let model = config.members[j].method.fit(&dataset.subset(train), seed).map_err(|e| e.to_string())?;
            valid.iter().map(|&i| model.predict(dataset.row(i)).map_err(|e| e.to_string())).collect()
        })
        .collect();

    let mut failures: Vec<(String, String)> = Vec::new();
    let mut pooled: Vec<Option<Vec<Vec<f64>>>> = vec![Some(Vec::new()); n_members];
    for (&(_, j), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(rows) => {
                if let Some(p) = pooled[j].as_mut() {
                    p.extend(rows);
                }
            }
            Err(e) => {
                if pooled[j].take().is_some() {
                    failures.push((config.members[j].name.clone(), e));
                }
            }
        }
    }
    let labels: Vec<usize> =
        splits.iter().flat_map(|(_, valid)| valid.iter().map(|&i| dataset.response()[i])).collect();
    let alive: Vec<usize> = (0..n_members).filter(|&j| pooled[j].is_some()).collect();
    if alive.is_empty() {
        return Err(EnsembleError::AllMembersFailed(failures).into());
    }
    let tables: Vec<Vec<Vec<f64>>> = alive.iter().map(|&j| pooled[j].clone().expect("alive")).collect();
    let member_rps: Vec<Option<f64>> =
        pooled.iter().map(|p| p.as_ref().map(|rows| pooled_rps(rows, &labels))).collect();
    let fit = optimize_simplex_weights(&tables, &labels)?;

    // refit on the whole learning set
    let refits: Vec<Result<FittedModel, String>> = alive
        .par_iter()
        .map(|&j| {
            let seed = derive_path(base, &[REFIT_STREAM, j as u64]);
            config.members[j].method.fit(dataset, seed).map_err(|e| e.to_string())
        })
        .collect();
    let mut weights = vec![0.0; n_members];
    let mut models: Vec<Option<FittedModel>> = vec![None; n_members];
    for ((&j, refit), &w) in alive.iter().zip(refits).zip(&fit.weights) {
        match refit {
            Ok(model) => {
                weights[j] = w;
                models[j] = Some(model);
            }
            Err(e) => failures.push((config.members[j].name.clone(), e)),
        }
    }
    let total: f64 = weights.iter().sum();
    if models.iter().all(Option::is_none) || total <= 0.0 {
        return Err(EnsembleError::AllMembersFailed(failures).into());
    }
    if models.iter().filter(|m| m.is_some()).count() < alive.len() {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let members = config
        .members
        .iter()
        .zip(models)
        .zip(weights)
        .map(|((spec, model), weight)| EnsembleMember {
            name: spec.name.clone(),
            method: spec.method.clone(),
            model,
            weight,
        })
        .collect();
    Ok(EnsembleModel {
        k: dataset.k(),
        n_features: dataset.p(),
        members,
        diagnostics: EnsembleDiagnostics {
            member_rps,
            mixture_rps: fit.objective,
            pooled_rows: labels.len(),
            failures,
        },
    })
}

/// Mean ranked probability score of per-row distributions.
pub fn pooled_rps(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = rows.iter().zip(labels).map(|(p, &y)| crate::evaluation::rps_unchecked(p, y)).sum();
    total / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexFit {
    pub weights: Vec<f64>,
    /// Mean RPS of the mixture at `weights`.
    pub objective: f64,
}

/// Cumulative member predictions: `cum[j][i * (k-1) + r]` for `r < k-1`,
/// together with the matching indicators `1{y_i <= r+1}`.
struct CumulativeTables {
    cum: Vec<Vec<f64>>,
    indicator: Vec<f64>,
    n_rows: usize,
}

impl CumulativeTables {
    fn new(tables: &[Vec<Vec<f64>>], labels: &[usize]) -> Result<Self, EnsembleError> {
        let n_rows = labels.len();
        let k = tables.first().and_then(|t| t.first()).map_or(0, Vec::len);
        if n_rows == 0 || k < 2 || tables.iter().any(|t| t.len() != n_rows || t.iter().any(|row| row.len() != k)) {
            return Err(EnsembleError::ShapeMismatch);
        }
        let cum = tables
            .iter()
            .map(|t| {
                t.iter()
                    .flat_map(|row| {
                        row[..k - 1].iter().scan(0.0, |acc, p| {
                            *acc += p;
                            Some(*acc)
                        })
                    })
                    .collect()
            })
            .collect();
        let indicator = labels.iter().flat_map(|&y| (1..k).map(move |r| if y <= r { 1.0 } else { 0.0 })).collect();
        Ok(Self { cum, indicator, n_rows })
    }

    fn objective(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for (c, &ind) in self.indicator.iter().enumerate() {
            let mix: f64 = w.iter().zip(&self.cum).map(|(wj, cj)| wj * cj[c]).sum();
            total += (mix - ind) * (mix - ind);
        }
        total / self.n_rows as f64
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for (c, &ind) in self.indicator.iter().enumerate() {
            let mix: f64 = w.iter().zip(&self.cum).map(|(wj, cj)| wj * cj[c]).sum();
            let resid = 2.0 * (mix - ind);
            for (gj, cj) in g.iter_mut().zip(&self.cum) {
                *gj += resid * cj[c];
            }
        }
        g.iter_mut().for_each(|v| *v /= self.n_rows as f64);
        g
    }

    /// `(A, b)` with objective `w'Aw - 2b'w + const`.
    fn quadratic(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.cum.len();
        let n = self.n_rows as f64;
        let a =
            DMatrix::from_fn(m, m, |i, j| self.cum[i].iter().zip(&self.cum[j]).map(|(x, y)| x * y).sum::<f64>() / n);
        let b =
            DVector::from_fn(m, |i, _| self.cum[i].iter().zip(&self.indicator).map(|(x, y)| x * y).sum::<f64>() / n);
        (a, b)
    }
}

/// Minimizes the pooled mean RPS of `sum_j w_j P_j` over the probability
/// simplex. `tables[j][i]` is member `j`'s distribution for row `i`.
///
/// Runs exponentiated gradient from uniform weights, then solves the
/// stationarity conditions exactly on every support set (for up to 12
/// members), and returns the best point found among those, the uniform
/// weights and the vertices.
pub fn optimize_simplex_weights(tables: &[Vec<Vec<f64>>], labels: &[usize]) -> Result<SimplexFit, EnsembleError> {
    let m = tables.len();
    if m == 0 {
        return Err(EnsembleError::NoMembers);
    }
    let t = CumulativeTables::new(tables, labels)?;
    if m == 1 {
        return Ok(SimplexFit { weights: vec![1.0], objective: t.objective(&[1.0]) });
    }

    let uniform = vec![1.0 / m as f64; m];
    let mut w = uniform.clone();
    for _ in 0..EG_ITERATIONS {
        let g = t.gradient(&w);
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj *= (-EG_STEP * (gj - gmin)).exp());
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|wj| *wj /= s);
    }

    let mut candidates = vec![w];
    if m <= MAX_POLISH_MEMBERS {
        candidates.extend(polish(&t));
    }
    candidates.push(uniform);
    for j in 0..m {
        let mut v = vec![0.0; m];
        v[j] = 1.0;
        candidates.push(v);
    }
    let mut best: Option<SimplexFit> = None;
    for c in candidates {
        let obj = t.objective(&c);
        if best.as_ref().map_or(true, |b| obj < b.objective) {
            best = Some(SimplexFit { weights: c, objective: obj });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Best feasible stationary point of the quadratic objective over all
/// support sets.
fn polish(t: &CumulativeTables) -> Option<Vec<f64>> {
    let (a, b) = t.quadratic();
    let m = b.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        let s = support.len();
        // [2 A_SS  1; 1'  0] [w; -lambda] = [2 b_S; 1]
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[(r, c)] = 2.0 * a[(i, j)];
            }
            kkt[(r, s)] = 1.0;
            kkt[(s, r)] = 1.0;
            rhs[r] = 2.0 * b[i];
        }
        rhs[s] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if sol.iter().take(s).any(|v| !v.is_finite() || *v < -1e-12) {
            continue;
        }
        let mut w = vec![0.0; m];
        for (r, &i) in support.iter().enumerate() {
            w[i] = sol[r].max(0.0);
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= total);
        let obj = t.objective(&w);
        if best.as_ref().map_or(true, |(o, _)| obj < *o) {
            best = Some((obj, w));
        }
    }
    best.map(|(_, w)| w)
}
