use ordforest::ensemble::{optimize_simplex_weights, pooled_rps, EnsembleError};
use ordforest::rng::rng_from_seed;
use ordforest::synth::generate;
use ordforest::{
    fit_ensemble, EnsembleConfig, Error, FeatureMatrix, ForestConfig, GeneratorSpec, Method, MethodSpec, OrdinalDataset,
};
use rand::Rng;

/// k = 3 data in which category 2 never occurs, so both parametric fits fail.
fn gap_dataset() -> OrdinalDataset {
    let mut rng = rng_from_seed(1);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = x.iter().map(|&v| if v + rng.gen_range(-0.5..0.5) > 0.0 { 3 } else { 1 }).collect();
    OrdinalDataset::from_parts(FeatureMatrix::new(n, 1, x).unwrap(), y, 3).unwrap()
}

#[test]
fn failing_member_gets_zero_weight() {
    let d = gap_dataset();
    let cfg = EnsembleConfig::new(vec![MethodSpec::new("pom", Method::Pom), MethodSpec::new("flat", Method::Uniform)]);
    let model = fit_ensemble(&d, &cfg, &mut rng_from_seed(3)).unwrap();
    assert_eq!(model.weights(), vec![0.0, 1.0]);
    assert!(model.members()[0].model.is_none());
    assert_eq!(model.diagnostics().failures.len(), 1);
    assert_eq!(model.diagnostics().member_rps[0], None);
    // weights (0, 1) reproduce the surviving member exactly
    assert_eq!(model.predict(&[0.3]).unwrap(), vec![1.0 / 3.0; 3]);
}

#[test]
fn all_members_failing_is_an_error() {
    let d = gap_dataset();
    let cfg = EnsembleConfig::new(vec![MethodSpec::new("pom", Method::Pom), MethodSpec::new("adj", Method::Adj)]);
    match fit_ensemble(&d, &cfg, &mut rng_from_seed(3)) {
        Err(Error::Ensemble(EnsembleError::AllMembersFailed(f))) => assert_eq!(f.len(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn too_few_rows_rejected() {
    let d = generate(&GeneratorSpec::latent_linear(9, vec![1.0], vec![0.0], 0)).unwrap();
    let cfg = EnsembleConfig::new(vec![MethodSpec::new("flat", Method::Uniform)]);
    assert!(matches!(
        fit_ensemble(&d, &cfg, &mut rng_from_seed(0)),
        Err(Error::Ensemble(EnsembleError::TooFewRows(9)))
    ));
}

#[test]
fn true_distribution_dominates_noise() {
    let spec = GeneratorSpec::latent_linear(5000, vec![1.5, -1.0], vec![-1.0, 0.0, 1.0], 12);
    let d = generate(&spec).unwrap();
    let truth: Vec<Vec<f64>> = (0..d.n()).map(|i| spec.true_distribution(d.row(i))).collect();
    let mut rng = rng_from_seed(13);
    let noise: Vec<Vec<f64>> = (0..d.n())
        .map(|_| {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let fit = optimize_simplex_weights(&[truth, noise], d.response()).unwrap();
    assert!(fit.weights[0] >= 0.9, "{:?}", fit.weights);
}

#[test]
fn mixture_matches_members_and_stays_within_their_range() {
    let d = generate(&GeneratorSpec::interaction(300, 3, 2.0, vec![-1.0, 0.0, 1.0], 5)).unwrap();
    let forest = ForestConfig { n_trees: 30, ..ForestConfig::default() };
    let cfg = EnsembleConfig { inner_repeats: 3, ..EnsembleConfig::ens5(&forest) };
    let model = fit_ensemble(&d, &cfg, &mut rng_from_seed(8)).unwrap();
    let w = model.weights();
    assert!(w.iter().all(|v| *v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let diag = model.diagnostics();
    let best_member = diag.member_rps.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    assert!(diag.mixture_rps <= best_member + 1e-9);

    let mut rng = rng_from_seed(9);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix = model.predict(&x).unwrap();
        let member_preds: Vec<Vec<f64>> =
            model.members().iter().map(|m| m.model.as_ref().unwrap().predict(&x).unwrap()).collect();
        assert!((mix.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for r in 0..4 {
            let expected: f64 = member_preds.iter().zip(&w).map(|(p, wj)| wj * p[r]).sum();
            assert!((mix[r] - expected).abs() < 1e-15);
            let lo = member_preds.iter().map(|p| p[r]).fold(f64::INFINITY, f64::min);
            let hi = member_preds.iter().map(|p| p[r]).fold(f64::NEG_INFINITY, f64::max);
            assert!(mix[r] >= lo - 1e-15 && mix[r] <= hi + 1e-15);
        }
    }
}

#[test]
fn uniform_members_give_uniform_mixture() {
    let d = generate(&GeneratorSpec::latent_linear(50, vec![1.0], vec![-0.5, 0.5], 2)).unwrap();
    let cfg = EnsembleConfig::new(vec![MethodSpec::new("a", Method::Uniform), MethodSpec::new("b", Method::Uniform)]);
    let model = fit_ensemble(&d, &cfg, &mut rng_from_seed(2)).unwrap();
    for v in model.predict(&[0.1]).unwrap() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn identical_members_reproduce_member_rps() {
    let d = generate(&GeneratorSpec::latent_linear(200, vec![1.0, 0.5], vec![-0.5, 0.5], 21)).unwrap();
    let cfg = EnsembleConfig::new(vec![MethodSpec::new("a", Method::Pom), MethodSpec::new("b", Method::Pom)]);
    let model = fit_ensemble(&d, &cfg, &mut rng_from_seed(4)).unwrap();
    let diag = model.diagnostics();
    let member = diag.member_rps[0].unwrap();
    assert_eq!(diag.member_rps[1], Some(member));
    assert!((diag.mixture_rps - member).abs() < 1e-10);
}

#[test]
fn fitting_is_deterministic_given_seed() {
    let d = generate(&GeneratorSpec::interaction(200, 3, 2.0, vec![0.0, 1.0], 31)).unwrap();
    let cfg = EnsembleConfig {
        inner_repeats: 2,
        ..EnsembleConfig::ens3(&ForestConfig { n_trees: 20, ..ForestConfig::default() })
    };
    let a = fit_ensemble(&d, &cfg, &mut rng_from_seed(6)).unwrap();
    let b = fit_ensemble(&d, &cfg, &mut rng_from_seed(6)).unwrap();
    assert_eq!(a, b);
    let c = fit_ensemble(&d, &cfg, &mut rng_from_seed(7)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn pooled_rps_is_the_mean_rps() {
    let rows = vec![vec![0.2, 0.5, 0.3], vec![1.0 / 3.0; 3]];
    assert!((pooled_rps(&rows, &[2, 1]) - (0.13 + 5.0 / 9.0) / 2.0).abs() < 1e-12);
}
