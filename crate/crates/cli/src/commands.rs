use std::fmt::Write as _;
use std::path::Path;

use ordforest::data::{conditional_target, load_dataset, load_features, split_indicator, DataError};
use ordforest::evaluation::{predict_median, predict_mode};
use ordforest::ordinal::{averaged_importance, Member};
use ordforest::rng::{derive_seed, rng_from_seed};
use ordforest::synth::{bayes_rps, generate};
use ordforest::{
    benchmark, BenchmarkConfig, DatasetSchema, FittedModel, GeneratorSpec, ImportanceKind, Method, MethodSpec,
    OrdinalDataset,
};
use serde::Serialize;

use crate::config;
use crate::{DataArgs, ImportanceArg, MethodArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Fit,
    Io,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Fit => 4,
            Kind::Io => 5,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub source: anyhow::Error,
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn or_kind(self, kind: Kind) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_kind(self, kind: Kind) -> Outcome<T> {
        self.map_err(|e| Failure { kind, source: e.into() })
    }
}

fn fail(kind: Kind, message: impl std::fmt::Display) -> Failure {
    Failure { kind, source: anyhow::anyhow!("{message}") }
}

/// Dimension and data problems are data errors; everything else raised while
/// fitting is a fit failure.
fn core_failure(e: ordforest::Error) -> Failure {
    let kind = match &e {
        ordforest::Error::Data(_)
        | ordforest::Error::DimensionMismatch { .. }
        | ordforest::Error::CategoryMismatch { .. } => Kind::Data,
        _ => Kind::Fit,
    };
    Failure { kind, source: e.into() }
}

fn load_schema(path: &Path) -> Outcome<DatasetSchema> {
    DatasetSchema::from_path(path).map_err(|e| {
        let e = anyhow::Error::from(e).context(format!("schema {}", path.display()));
        Failure { kind: Kind::Config, source: e }
    })
}

fn read_data(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        kind: Kind::Data,
        source: anyhow::Error::from(e).context(format!("reading {}", path.display())),
    })
}

fn load(args: &DataArgs) -> Outcome<(DatasetSchema, OrdinalDataset)> {
    let schema = load_schema(&args.schema)?;
    let text = read_data(&args.data)?;
    let dataset = load_dataset(&text, &schema).map_err(|e| data_failure(e, &args.data))?;
    Ok((schema, dataset))
}

fn data_failure(e: DataError, path: &Path) -> Failure {
    Failure { kind: Kind::Data, source: anyhow::Error::from(e).context(format!("data {}", path.display())) }
}

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).or_kind(Kind::Io)?;
    }
    std::fs::write(path, text).map_err(|e| Failure {
        kind: Kind::Io,
        source: anyhow::Error::from(e).context(format!("writing {}", path.display())),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn set_label(a: usize, b: usize) -> String {
    if a == b {
        format!("{{{a}}}")
    } else {
        format!("{{{a}..{b}}}")
    }
}

/// Human-readable description of split `r`.
pub fn split_label(r: usize, k: usize, conditional: bool) -> String {
    if conditional {
        format!("{} vs {r} given {{{},{r}}}", r - 1, r - 1)
    } else {
        format!("{} vs {}", set_label(1, r - 1), set_label(r, k))
    }
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Outcome<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).or_kind(Kind::Io)?;
    for row in rows {
        w.write_record(row).or_kind(Kind::Io)?;
    }
    let bytes = w.into_inner().map_err(|e| fail(Kind::Io, e))?;
    String::from_utf8(bytes).or_kind(Kind::Io)
}

pub fn fit(data: &DataArgs, method: &MethodArgs, out: &Path, seed: u64) -> Outcome {
    let (_, dataset) = load(data)?;
    let method =
        config::build_method(method.config.as_deref(), method.method.as_deref(), &method.sets).or_kind(Kind::Config)?;
    let model = method.fit(&dataset, seed).map_err(core_failure)?;
    write_file(out, &model.to_json())?;
    print!("{}", fit_summary(&model, &dataset));
    Ok(())
}

fn forest_summary(s: &mut String, members: &[Member], dataset: &OrdinalDataset, conditional: bool) {
    let k = dataset.k();
    for (i, m) in members.iter().enumerate() {
        let r = i + 2;
        let label = split_label(r, k, conditional);
        match m {
            Member::Constant { n0, n1 } => {
                let _ = writeln!(s, "  {label}: constant member (n0 = {n0}, n1 = {n1})");
            }
            Member::Forest(f) => {
                let target = if conditional { conditional_target(dataset, r) } else { split_indicator(dataset, r) }
                    .expect("split index within range");
                let x = dataset.features().select_rows(&target.row_indices);
                let brier = f.oob_brier(&x, &target.values).ok().flatten();
                let brier = brier.map_or_else(|| "n/a".to_string(), |b| format!("{b:.6}"));
                let _ = writeln!(s, "  {label}: {} trees on {} rows, OOB Brier {brier}", f.trees().len(), target.len());
            }
        }
    }
}

fn fit_summary(model: &FittedModel, dataset: &OrdinalDataset) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n = {}, p = {}, k = {}", dataset.n(), dataset.p(), dataset.k());
    let names = dataset.feature_names();
    match model {
        FittedModel::PropOdds(m) => {
            let _ = writeln!(s, "proportional odds model");
            parametric_summary(&mut s, &m.intercepts, &m.coefficients, &m.diagnostics, names);
        }
        FittedModel::Adjacent(m) => {
            let _ = writeln!(s, "adjacent-categories logit model");
            parametric_summary(&mut s, &m.intercepts, &m.coefficients, &m.diagnostics, names);
        }
        FittedModel::SplitBased(f) => {
            let _ = writeln!(s, "split-based ordinal forest, {} members", f.members().len());
            forest_summary(&mut s, f.members(), dataset, false);
        }
        FittedModel::AdjCat(f) => {
            let _ = writeln!(s, "adjacent-categories ordinal forest, {} members", f.members().len());
            forest_summary(&mut s, f.members(), dataset, true);
        }
        FittedModel::Ensemble(e) => {
            let _ = writeln!(s, "ensemble, {} members", e.members().len());
            let d = e.diagnostics();
            for (m, rps) in e.members().iter().zip(&d.member_rps) {
                let rps = rps.map_or_else(|| "failed".to_string(), |v| format!("{v:.6}"));
                let _ = writeln!(s, "  {} ({}): weight {:.6}, inner RPS {rps}", m.name, m.method.tag(), m.weight);
            }
            let _ = writeln!(s, "  mixture inner RPS {:.6} over {} pooled rows", d.mixture_rps, d.pooled_rows);
            for (name, err) in &d.failures {
                let _ = writeln!(s, "  dropped {name}: {err}");
            }
        }
        FittedModel::Uniform { k, .. } => {
            let _ = writeln!(s, "uniform reference forecast over {k} categories");
        }
    }
    s
}

fn parametric_summary(
    s: &mut String,
    intercepts: &[f64],
    coefficients: &[f64],
    d: &ordforest::parametric::FitDiagnostics,
    names: &[String],
) {
    let _ = writeln!(
        s,
        "log-likelihood {:.6}, {} iterations, gradient max-norm {:.3e}, converged {}",
        d.loglik, d.iterations, d.gradient_norm, d.converged
    );
    for (r, b) in intercepts.iter().enumerate() {
        let _ = writeln!(s, "  intercept[{}] {b:.6}", r + 2);
    }
    for (name, b) in names.iter().zip(coefficients) {
        let _ = writeln!(s, "  {name} {b:.6}");
    }
}

pub fn predict(model_path: &Path, data: &DataArgs, out: Option<&Path>) -> Outcome {
    let text = std::fs::read_to_string(model_path)
        .map_err(|e| fail(Kind::Config, format!("reading {}: {e}", model_path.display())))?;
    let model = FittedModel::from_json(&text).or_kind(Kind::Config)?;
    let schema = load_schema(&data.schema)?;
    let (features, _) = load_features(&read_data(&data.data)?, &schema).map_err(|e| data_failure(e, &data.data))?;
    if features.n_cols() != model.n_features() {
        return Err(fail(
            Kind::Data,
            format!("model expects {} features, data has {}", model.n_features(), features.n_cols()),
        ));
    }
    let labels: Vec<String> =
        if schema.k() == model.k() { schema.level_labels() } else { (1..=model.k()).map(|r| r.to_string()).collect() };
    let mut header: Vec<String> = labels.iter().map(|l| format!("p_{l}")).collect();
    header.extend(["mode".to_string(), "median".to_string()]);
    let mut rows = Vec::with_capacity(features.n_rows());
    for x in features.rows() {
        let p = model.predict(x).map_err(core_failure)?;
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        row.push(labels[predict_mode(&p) - 1].clone());
        row.push(labels[predict_median(&p) - 1].clone());
        rows.push(row);
    }
    emit(out, &csv_text(&header, &rows)?)
}

pub fn evaluate(
    data: &DataArgs,
    roster: Option<&Path>,
    tags: &[String],
    n_repeats: Option<usize>,
    n_learn: Option<usize>,
    out: &Path,
    seed: u64,
) -> Outcome {
    let (specs, rest) = match roster {
        Some(path) => config::read_roster(path).or_kind(Kind::Config)?,
        None => {
            let specs = tags
                .iter()
                .map(|t| {
                    let method = config::build_method(None, Some(t), &[])?;
                    Ok(MethodSpec::new(t.clone(), method))
                })
                .collect::<anyhow::Result<Vec<_>>>()
                .or_kind(Kind::Config)?;
            (specs, toml::Table::new())
        }
    };
    if specs.is_empty() {
        return Err(fail(Kind::Config, "no methods: pass --config with [[methods]] or --method"));
    }
    let from_file = |key: &str| -> Outcome<Option<usize>> {
        match rest.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_integer()
                .and_then(|i| usize::try_from(i).ok())
                .map(Some)
                .ok_or_else(|| fail(Kind::Config, format!("`{key}` must be a non-negative integer"))),
        }
    };
    let cfg = BenchmarkConfig {
        n_repeats: n_repeats.or(from_file("n_repeats")?).unwrap_or(30),
        n_learn: n_learn.or(from_file("n_learn")?),
        seed,
    };
    let (_, dataset) = load(data)?;
    let report = benchmark(&dataset, &specs, &cfg).or_kind(Kind::Config)?;
    std::fs::create_dir_all(out).or_kind(Kind::Io)?;
    write_file(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("cells.csv"), &report.to_csv())?;

    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
    let header: Vec<String> = [
        "method",
        "completed",
        "failed",
        "mean_rps",
        "mean_zero_one_mode",
        "mean_zero_one_median",
        "mean_distance_mode",
        "mean_distance_median",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let summary = report.summary();
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|m| {
            vec![
                m.method.clone(),
                m.completed.to_string(),
                m.failed.to_string(),
                fmt(m.mean_rps),
                fmt(m.mean_zero_one_mode),
                fmt(m.mean_zero_one_median),
                fmt(m.mean_distance_mode),
                fmt(m.mean_distance_median),
            ]
        })
        .collect();
    write_file(&out.join("summary.csv"), &csv_text(&header, &rows)?)?;
    println!("n = {}, n_learn = {}, repetitions = {}, seed = {}", report.n, report.n_learn, report.n_repeats, seed);
    for m in &summary {
        let rps = m.mean_rps.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
        println!("  {:<16} mean RPS {rps} ({} of {} repetitions)", m.method, m.completed, report.n_repeats);
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("warning: {} failed on repetition {}: {}", c.method, c.repetition, c.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

pub fn importance(
    data: &DataArgs,
    method: &MethodArgs,
    kind: ImportanceArg,
    repeats: usize,
    out: Option<&Path>,
    seed: u64,
) -> Outcome {
    let (_, dataset) = load(data)?;
    let tag = method.method.as_deref().or(if method.config.is_none() { Some("rfadj") } else { None });
    let m = config::build_method(method.config.as_deref(), tag, &method.sets).or_kind(Kind::Config)?;
    if !matches!(m, Method::Rfsplit(_) | Method::Rfadj(_)) {
        return Err(fail(Kind::Config, format!("importance needs rfsplit or rfadj, got {}", m.tag())));
    }
    if repeats == 0 {
        return Err(fail(Kind::Config, "--repeats must be at least 1"));
    }
    let kind = match kind {
        ImportanceArg::Gini => ImportanceKind::Gini,
        ImportanceArg::Permutation => ImportanceKind::Permutation,
    };
    let model = m.fit(&dataset, seed).map_err(core_failure)?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let (rows, conditional) = match &model {
        FittedModel::SplitBased(f) => (f.split_importances(&dataset, kind, &mut rng, repeats), false),
        FittedModel::AdjCat(f) => (f.split_importances(&dataset, kind, &mut rng, repeats), true),
        _ => unreachable!("checked above"),
    };
    let rows = rows.or_kind(Kind::Fit)?;
    let avg = averaged_importance(&rows);
    let mut header = vec!["split".to_string()];
    header.extend(dataset.feature_names().iter().cloned());
    let mut table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut rec = vec![split_label(i + 2, dataset.k(), conditional)];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            rec
        })
        .collect();
    let mut last = vec!["average".to_string()];
    last.extend(avg.iter().map(|v| format!("{v:?}")));
    table.push(last);
    emit(out, &csv_text(&header, &table)?)
}

#[derive(Serialize)]
struct Truth<'a> {
    spec: &'a GeneratorSpec,
    category_counts: Vec<usize>,
    bayes_rps: ordforest::synth::MonteCarloEstimate,
}

/// Default generator when no configuration is given.
fn default_generator() -> GeneratorSpec {
    GeneratorSpec::latent_linear(1000, vec![1.0, -1.0], vec![-1.0, 0.0, 1.0], 0)
}

pub fn synth(config_path: Option<&Path>, sets: &[String], n_mc: usize, out: &Path, seed: u64) -> Outcome {
    let mut table = match config_path {
        Some(p) => config::read_table(p).or_kind(Kind::Config)?,
        None => toml::Table::try_from(default_generator()).or_kind(Kind::Config)?,
    };
    for s in sets {
        config::apply_set(&mut table, s).or_kind(Kind::Config)?;
    }
    let mut spec: GeneratorSpec = toml::Value::Table(table).try_into().or_kind(Kind::Config)?;
    spec.seed = seed;
    spec.validate().or_kind(Kind::Config)?;
    let dataset = generate(&spec).or_kind(Kind::Config)?;
    let estimate = bayes_rps(&spec, n_mc, &mut rng_from_seed(derive_seed(seed, 1))).or_kind(Kind::Config)?;
    let (csv, schema) = dataset.to_table();
    std::fs::create_dir_all(out).or_kind(Kind::Io)?;
    write_file(&out.join("data.csv"), &csv)?;
    write_file(&out.join("schema.toml"), &schema.to_toml())?;
    let truth = Truth { spec: &spec, category_counts: dataset.category_counts(), bayes_rps: estimate };
    write_file(&out.join("truth.json"), &serde_json::to_string_pretty(&truth).or_kind(Kind::Io)?)?;
    println!(
        "wrote {} rows (k = {}, p = {}); Bayes RPS {:.6} (s.e. {:.6})",
        dataset.n(),
        dataset.k(),
        dataset.p(),
        estimate.mean,
        estimate.std_error
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_labels() {
        assert_eq!(split_label(2, 4, false), "{1} vs {2..4}");
        assert_eq!(split_label(3, 4, false), "{1..2} vs {3..4}");
        assert_eq!(split_label(4, 4, false), "{1..3} vs {4}");
        assert_eq!(split_label(3, 4, true), "2 vs 3 given {2,3}");
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [Kind::Config, Kind::Data, Kind::Fit, Kind::Io].map(Kind::code);
        for (i, a) in codes.iter().enumerate() {
            assert!(*a != 0 && codes[i + 1..].iter().all(|b| b != a));
        }
    }
}
