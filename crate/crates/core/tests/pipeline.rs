//! Cross-module checks: exact numerics against dense oracles, the
//! simulator against exact laws, and certificates through to their text form.

mod common;

use nalgebra::{DMatrix, DVector};
use qsd_core::birth_death::{tail_expected_hitting, HittingStart};
use qsd_core::certifier::{certify, check_ratio_inequality, CertifyOptions, TimeGrid};
use qsd_core::chain::{build_logistic, ChainFile};
use qsd_core::criterion::{criterion_report, derive_certificate_via_criterion};
use qsd_core::exact::{tv_distance, ExactEngine};
use qsd_core::format;
use qsd_core::monte_carlo::{conditional_estimate, fleming_viot, simulate_batch};
use qsd_core::{
    AbsorbedChain, BirthDeathSpec, BoundaryMode, CatastropheSpec, RateFamily, StateDistribution,
};

/// Leading left eigenvector of the sub-generator by inverse iteration on
/// `-Q~`, whose smallest eigenvalue is the absorption rate.
fn inverse_iteration_qsd(chain: &AbsorbedChain) -> Vec<f64> {
    let q = chain.to_dense();
    let n = chain.n_transient();
    let m = DMatrix::from_fn(n, n, |i, j| -q[i + 1][j + 1]).transpose();
    let lu = m.lu();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..500 {
        let w = lu.solve(&v).unwrap();
        v = &w / w.sum();
    }
    v.iter().copied().collect()
}

#[test]
fn qsd_matches_inverse_iteration() {
    let e = ExactEngine::default();
    let mut rng = common::rng(5);
    for n in 2..=12 {
        let chain = common::random_sparse_chain(&mut rng, n);
        let ours = e.compute_qsd(&chain, 1e-12).unwrap();
        let oracle = inverse_iteration_qsd(&chain);
        assert!(common::tv(ours.qsd.weights(), &oracle) < 1e-9, "n = {n}");
        let theta: f64 = (1..=n)
            .map(|x| oracle[x - 1] * chain.absorption_rate(x))
            .sum();
        assert!((ours.absorption_rate - theta).abs() < 1e-9 * theta.max(1.0));
    }
}

#[test]
fn survival_matches_dense_exponential() {
    let e = ExactEngine::default();
    let chain = build_logistic(1.5, 1.0, 0.5, 9, BoundaryMode::Reflect).unwrap();
    for t in [0.2, 1.0, 4.0] {
        let p = common::dense_expm(&chain, t);
        for x in 1..9 {
            let s = e.survival_probability(&chain, x, t).unwrap().probability;
            assert!((s - (1.0 - p[(x, 0)])).abs() < 1e-10, "x = {x}, t = {t}");
        }
    }
}

#[test]
fn simulated_survival_within_binomial_error() {
    let e = ExactEngine::default();
    let chain = build_logistic(1.0, 1.0, 1.0, 30, BoundaryMode::Reflect).unwrap();
    let n = 20_000;
    for (x, t) in [(1, 0.5), (1, 2.0), (3, 1.0), (8, 3.0)] {
        let mu = StateDistribution::dirac(30, x).unwrap();
        let batch = simulate_batch(&chain, &mu, t, n, 17, None).unwrap();
        let empirical = batch.survivors().count() as f64 / n as f64;
        let exact = e.survival_probability(&chain, x, t).unwrap().probability;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (empirical - exact).abs() < 3.0 * se,
            "x = {x}, t = {t}: {empirical} vs {exact}"
        );
    }
}

#[test]
fn two_state_absorption_times_are_unit_exponential() {
    let chain = AbsorbedChain::from_entries(&[(1, 0, 1.0)], 2, BoundaryMode::Reflect).unwrap();
    let mu = StateDistribution::dirac(2, 1).unwrap();
    let n = 100_000;
    let batch = simulate_batch(&chain, &mu, f64::INFINITY, n, 1, None).unwrap();
    let mean: f64 = batch
        .paths
        .iter()
        .map(|p| p.absorption_time().unwrap())
        .sum::<f64>()
        / n as f64;
    assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
}

#[test]
fn simulated_hitting_time_matches_series() {
    let spec = BirthDeathSpec::logistic(1.0, 1.0, 1.0).unwrap();
    let chain = spec.materialize(60, BoundaryMode::Reflect).unwrap();
    let mu = StateDistribution::dirac(60, 5).unwrap();
    let n = 50_000;
    let batch = simulate_batch(&chain, &mu, f64::INFINITY, n, 3, Some(&[1])).unwrap();
    let times: Vec<f64> = batch
        .paths
        .iter()
        .map(|p| match p.outcome {
            qsd_core::monte_carlo::PathOutcome::HitSet { time } => time,
            other => panic!("unexpected outcome {other:?}"),
        })
        .collect();
    let mean = times.iter().sum::<f64>() / n as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let exact = tail_expected_hitting(&spec, 1, HittingStart::State(5)).unwrap();
    assert!(
        (mean - exact).abs() < 3.0 * (var / n as f64).sqrt(),
        "{mean} vs {exact}"
    );
}

#[test]
fn conditional_estimate_tracks_exact_law_at_short_times() {
    let e = ExactEngine::default();
    let chain = build_logistic(1.0, 1.0, 1.0, 40, BoundaryMode::Reflect).unwrap();
    let mu = StateDistribution::dirac(40, 2).unwrap();
    let batch = simulate_batch(&chain, &mu, 2.0, 100_000, 21, None).unwrap();
    let (estimate, _) = conditional_estimate(&batch).unwrap();
    let exact = e.conditional_distribution(&chain, &mu, 2.0).unwrap();
    assert!(tv_distance(&estimate, &exact).unwrap() < 0.02);
}

#[test]
fn fleming_viot_error_shrinks_with_particle_count() {
    // Sampling error decays like 1/sqrt(n): doubling n scales the mean TV
    // error over 20 seeds by about 1/sqrt(2), not 1/2.
    let e = ExactEngine::default();
    let chain = build_logistic(1.0, 1.0, 1.0, 30, BoundaryMode::Reflect).unwrap();
    let rho = e.compute_qsd(&chain, 1e-12).unwrap().qsd;
    let mu = StateDistribution::dirac(30, 1).unwrap();
    let mean_error = |n: usize| -> f64 {
        (0..20u64)
            .map(|seed| {
                let snaps = fleming_viot(&chain, &mu, n, 10.0, seed, &[10.0]).unwrap();
                tv_distance(&snaps[0].empirical(30).unwrap(), &rho).unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    let ratio = mean_error(1000) / mean_error(500);
    let expected = std::f64::consts::FRAC_1_SQRT_2;
    assert!((ratio - expected).abs() < 0.2 * expected, "ratio {ratio}");
}

#[test]
fn catastrophe_certificate_bounds_the_observed_decay() {
    let e = ExactEngine::default();
    let chain = CatastropheSpec::new(1.0, 3.0, 1.0)
        .materialize(40, BoundaryMode::Reflect)
        .unwrap();
    let cert = derive_certificate_via_criterion(&e, &chain, &[1], 1).unwrap();
    let direct = certify(&e, &chain, &[1], 1, &CertifyOptions::default()).unwrap();
    assert!(direct.gamma > 0.0 && cert.gamma > 0.0);
    let times = TimeGrid::default().points(20.0);
    assert!(
        check_ratio_inequality(&e, &chain, &direct, &times)
            .unwrap()
            .holds
    );
    let mu = StateDistribution::dirac(40, 1).unwrap();
    let nu = StateDistribution::dirac(40, 35).unwrap();
    for t in 1..=8 {
        let t = t as f64;
        let a = e.conditional_distribution(&chain, &mu, t).unwrap();
        let b = e.conditional_distribution(&chain, &nu, t).unwrap();
        let d = tv_distance(&a, &b).unwrap();
        assert!(d <= direct.bound(t) + 1e-9 && d <= cert.bound(t) + 1e-9);
    }
}

#[test]
fn certificate_text_round_trips_values() {
    let e = ExactEngine::default();
    let chain = AbsorbedChain::from_entries(
        &[
            (1, 0, 1.0),
            (1, 2, 1.0),
            (2, 1, 2.0),
            (2, 3, 0.5),
            (3, 2, 3.0),
        ],
        4,
        BoundaryMode::Reflect,
    )
    .unwrap();
    let cert = certify(&e, &chain, &[1, 2], 1, &CertifyOptions::default()).unwrap();
    let text = format::certificate_text(&cert);
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(value("gamma"), cert.gamma);
    assert_eq!(value("c4"), cert.c4.value);
    assert!(text.contains("K = 1,2\n"));
    assert!(text.contains("provenance.c1 = certified\n"));
}

#[test]
fn chain_file_drives_the_full_pipeline() {
    let text = "\
# three-state birth-death
states 4
boundary reflect
rate 1 0 1.0
rate 1 2 1.0
rate 2 1 2.0
rate 2 3 1.0
rate 3 2 3.0
";
    let chain = ChainFile::parse(text).unwrap().build(None).unwrap();
    let e = ExactEngine::default();
    let qsd = e.compute_qsd(&chain, 1e-12).unwrap();
    let oracle = inverse_iteration_qsd(&chain);
    assert!(common::tv(qsd.qsd.weights(), &oracle) < 1e-9);
    let csv = format::distribution_csv(&qsd.qsd);
    assert_eq!(csv.lines().count(), 4);
    let report = criterion_report(&chain, None, 10).unwrap();
    // K = {1} misses state 3 entirely; K = {1,2} leaves only state 3, which
    // enters K at rate 3 > C = 1.
    assert_eq!(report.k, Some(vec![1, 2]));
    assert!(report.theorem31_holds);
    assert!(format::criterion_text(&report).contains("theorem31_holds = true\n"));
}

#[test]
fn logistic_file_windows_follow_the_caller() {
    let file = ChainFile::parse("logistic 1 1 1\n").unwrap();
    let small = file.build(Some(10)).unwrap();
    let big = file.build(Some(40)).unwrap();
    assert_eq!(small.n_states(), 10);
    assert_eq!(
        big.rate(5, 4),
        build_logistic(1.0, 1.0, 1.0, 40, BoundaryMode::Reflect)
            .unwrap()
            .rate(5, 4)
    );
}
