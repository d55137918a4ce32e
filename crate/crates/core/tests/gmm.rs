mod common;

use common::criteria;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use pckid::gmm::{self, terms, Covariance, CovarianceKind, EmConfig, GmmParams};
use pckid::{Error, IncompleteMatrix};

fn check(outcome: criteria::Outcome) {
    assert!(outcome.pass, "{}", outcome.detail);
}

#[test]
fn em_steps_match_complete_data_reference() {
    check(criteria::em_matches_reference());
}

#[test]
fn diagonal_formulas_match_full_formulas() {
    check(criteria::diagonal_matches_full());
}

#[test]
fn log_likelihood_never_decreases() {
    check(criteria::em_is_monotone());
}

#[test]
fn recovers_means_under_mar() {
    check(criteria::recovers_means(true));
}

#[test]
fn recovers_means_under_mcar() {
    check(criteria::recovers_means(false));
}

fn random_params(r: &mut rand_chacha::ChaCha8Rng, k: usize, d: usize, kind: CovarianceKind) -> GmmParams {
    let w: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let weights = DVector::from_iterator(k, w.iter().map(|v| v / total));
    let means = DMatrix::from_fn(k, d, |_, _| 2.0 * normal(r));
    let covariances = (0..k)
        .map(|_| match kind {
            CovarianceKind::Full => Covariance::Full(random_spd(r, d, 0.3, 1.5)),
            CovarianceKind::Diagonal => Covariance::Diagonal(DVector::from_fn(d, |_, _| r.random_range(0.3..2.0))),
        })
        .collect();
    GmmParams::new(weights, means, covariances).unwrap()
}

/// Per-row completions from the E-step against the reference formulas, and
/// the M-step against sums of the reference Ω terms.
#[test]
fn incomplete_steps_match_reference_formulas() {
    for case in 0..30u64 {
        let mut r = rng(100 + case);
        let (n, d, k) = (40, 4, 2);
        let kind = if case % 2 == 0 { CovarianceKind::Full } else { CovarianceKind::Diagonal };
        let x = random_mixture_data(&mut r, n, d, k);
        let data = random_mask(&mut r, &x, 0.35);
        let params = random_params(&mut r, k, d, kind);
        let es = gmm::e_step(&data, &params).unwrap();
        let floor = 1e-6;
        let next = gmm::m_step(&data, &es, &params, floor).unwrap();
        let gamma = es.responsibilities.matrix();

        for c in 0..k {
            let mu = params.mean(c);
            let nk: f64 = gamma.column(c).sum();
            let mut completions = Vec::new();
            for i in 0..n {
                let pattern = data.row_pattern(i);
                let xi = x.row(i).transpose();
                let y = match &params.covariances[c] {
                    Covariance::Full(s) => terms::full_completion(&mu, s, &pattern, &xi).unwrap(),
                    Covariance::Diagonal(v) => terms::diagonal_completion(&mu, v, &pattern, &xi),
                };
                let got = es.completions[c].row(i).transpose();
                assert!((&got - &y).amax() < 1e-10, "case {case} row {i}");
                completions.push(y);
            }
            let mu_new = completions
                .iter()
                .enumerate()
                .fold(DVector::zeros(d), |acc, (i, y)| acc + y * gamma[(i, c)])
                / nk;
            assert!((next.mean(c) - &mu_new).amax() < 1e-10);
            let mut omega = DMatrix::zeros(d, d);
            for (i, y) in completions.iter().enumerate() {
                let pattern = data.row_pattern(i);
                omega += match &params.covariances[c] {
                    Covariance::Full(s) => terms::full_omega(gamma[(i, c)], y, &mu_new, s, &pattern).unwrap(),
                    Covariance::Diagonal(v) => {
                        DMatrix::from_diagonal(&terms::diagonal_omega(gamma[(i, c)], y, &mu_new, v, &pattern))
                    }
                };
            }
            let mut want = omega / nk;
            for j in 0..d {
                want[(j, j)] += floor;
            }
            assert!(max_rel_diff(&next.covariances[c].to_dense(), &want) < 1e-10, "case {case}");
            assert!((next.weights[c] - nk / n as f64).abs() < 1e-14);
        }
    }
}

/// The dense diagonal engine used by `fit_from` against repeated
/// `e_step`/`m_step` calls on incomplete data.
#[test]
fn fast_diagonal_engine_matches_step_functions() {
    for case in 0..10u64 {
        let mut r = rng(200 + case);
        let x = random_mixture_data(&mut r, 80, 5, 3);
        let data = random_mask(&mut r, &x, 0.4);
        let cfg = EmConfig {
            max_iterations: 8,
            ..EmConfig::default()
        };
        let init = gmm::init_params(&data, 3, &cfg, case).unwrap();
        let fit = gmm::fit_from(&data, init.clone(), &cfg).unwrap();
        let mut p = init;
        let mut trace = Vec::new();
        for _ in 0..8 {
            let es = gmm::e_step(&data, &p).unwrap();
            trace.push(es.log_likelihood);
            p = gmm::m_step(&data, &es, &p, cfg.variance_floor).unwrap();
        }
        let last = gmm::e_step(&data, &p).unwrap();
        trace.push(last.log_likelihood);
        assert!(params_rel_diff(&fit.params, &RefParams::from_params(&p)) < 1e-10);
        assert!((fit.responsibilities.matrix() - last.responsibilities.matrix()).amax() < 1e-10);
        for (a, b) in fit.log_likelihood_trace.iter().zip(&trace) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }
}

#[test]
fn placeholder_values_under_the_mask_are_ignored() {
    let mut r = rng(7);
    let x = random_mixture_data(&mut r, 60, 3, 2);
    let data = random_mask(&mut r, &x, 0.3);
    for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
        let cfg = EmConfig {
            covariance_kind: kind,
            ..EmConfig::default()
        };
        let base = gmm::fit(&data, 2, &cfg, 3).unwrap();
        for placeholder in [0.0, -1e6, 42.0] {
            let other = gmm::fit(&data.with_placeholder(placeholder), 2, &cfg, 3).unwrap();
            assert_eq!(base.params, other.params);
            assert_eq!(base.responsibilities, other.responsibilities);
        }
    }
}

#[test]
fn row_permutation_permutes_posteriors() {
    let mut r = rng(8);
    let x = random_mixture_data(&mut r, 50, 3, 2);
    let data = random_mask(&mut r, &x, 0.3);
    let params = random_params(&mut r, 2, 3, CovarianceKind::Full);
    let perm = shuffled(&mut r, 50);
    let a = gmm::posterior(&params, &data).unwrap();
    let b = gmm::posterior(&params, &data.select_rows(&perm)).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        for c in 0..2 {
            assert!((a.matrix()[(old, c)] - b.matrix()[(new, c)]).abs() < 1e-14);
        }
    }
}

#[test]
fn posterior_agrees_with_fit_responsibilities() {
    let mut r = rng(9);
    let x = random_mixture_data(&mut r, 70, 4, 3);
    let data = random_mask(&mut r, &x, 0.25);
    for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
        let cfg = EmConfig {
            covariance_kind: kind,
            ..EmConfig::default()
        };
        let fit = gmm::fit(&data, 3, &cfg, 1).unwrap();
        let post = gmm::posterior(&fit.params, &data).unwrap();
        assert!((post.matrix() - fit.responsibilities.matrix()).amax() < 1e-12);
        for row in post.matrix().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_component_gets_all_mass() {
    let mut r = rng(10);
    let x = random_mixture_data(&mut r, 30, 2, 2);
    let data = random_mask(&mut r, &x, 0.2);
    let fit = gmm::fit(&data, 1, &EmConfig::default(), 0).unwrap();
    assert!(fit.responsibilities.matrix().iter().all(|&g| (g - 1.0).abs() < 1e-15));
    assert!((fit.params.weights[0] - 1.0).abs() < 1e-15);
}

#[test]
fn uniform_responsibilities_give_sample_moments() {
    let mut r = rng(11);
    let x = random_mixture_data(&mut r, 40, 3, 1);
    let data = IncompleteMatrix::complete(x.clone());
    let cfg = EmConfig {
        max_iterations: 1,
        covariance_kind: CovarianceKind::Full,
        ..EmConfig::default()
    };
    let fit = gmm::fit(&data, 1, &cfg, 0).unwrap();
    let mean = x.row_mean().transpose();
    let centred = DMatrix::from_fn(40, 3, |i, j| x[(i, j)] - mean[j]);
    let mut cov = centred.tr_mul(&centred) / 40.0;
    for j in 0..3 {
        cov[(j, j)] += 1e-6;
    }
    assert!((fit.params.mean(0) - mean).amax() < 1e-12);
    assert!(max_rel_diff(&fit.params.covariances[0].to_dense(), &cov) < 1e-12);
}

#[test]
fn symmetric_point_gets_equal_posteriors() {
    let params = GmmParams::new(
        DVector::from_vec(vec![0.5, 0.5]),
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]),
        vec![Covariance::Full(DMatrix::identity(2, 2)); 2],
    )
    .unwrap();
    let data = IncompleteMatrix::from_rows(&[vec![Some(0.0), Some(3.0)], vec![None, Some(-2.0)]]).unwrap();
    let post = gmm::posterior(&params, &data).unwrap();
    for v in post.matrix().iter() {
        assert!((v - 0.5).abs() < 1e-15);
    }
}

#[test]
fn fully_missing_row_gets_mixture_weights() {
    let mut r = rng(12);
    for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
        let params = random_params(&mut r, 3, 2, kind);
        let data = IncompleteMatrix::from_rows(&[vec![Some(0.3), None], vec![None, None]]).unwrap();
        let post = gmm::posterior(&params, &data).unwrap();
        for c in 0..3 {
            assert!((post.matrix()[(1, c)] - params.weights[c]).abs() < 1e-15);
        }
    }
}

#[test]
fn one_iteration_is_one_round() {
    let mut r = rng(13);
    let x = random_mixture_data(&mut r, 50, 2, 2);
    let data = random_mask(&mut r, &x, 0.2);
    let cfg = EmConfig {
        max_iterations: 1,
        ..EmConfig::default()
    };
    let init = gmm::init_params(&data, 2, &cfg, 5).unwrap();
    let fit = gmm::fit_from(&data, init.clone(), &cfg).unwrap();
    assert_eq!(fit.iterations, 1);
    assert_eq!(fit.log_likelihood_trace.len(), 2);
    let es = gmm::e_step(&data, &init).unwrap();
    let next = gmm::m_step(&data, &es, &init, cfg.variance_floor).unwrap();
    assert!(params_rel_diff(&fit.params, &RefParams::from_params(&next)) < 1e-10);
}

/// One centre per blob whenever the two drawn rows come from different
/// blobs; a few EM rounds separate the blobs from every draw.
#[test]
fn init_places_one_centre_per_blob() {
    let mut split_draws = 0;
    for seed in 0..20 {
        let mut r = rng(300 + seed);
        let (x, labels) = separated_blobs(&mut r, 30, 3, 20.0);
        let data = IncompleteMatrix::complete(x);
        let cfg = EmConfig::default();
        let p = gmm::init_params(&data, 2, &cfg, seed).unwrap();
        let drawn = rand::seq::index::sample(&mut pckid::seed::rng(seed), 60, 2).into_vec();
        if labels[drawn[0]] != labels[drawn[1]] {
            split_draws += 1;
            let post = gmm::posterior(&p, &data).unwrap().hard_labels();
            assert_eq!(brute_force_accuracy(&labels, &post), 1.0, "seed {seed}");
            assert_eq!(p.weights.as_slice(), &[0.5, 0.5]);
        }
        let fit = gmm::fit_from(&data, p, &cfg).unwrap();
        assert_eq!(brute_force_accuracy(&labels, &fit.responsibilities.hard_labels()), 1.0, "seed {seed}");
    }
    assert!(split_draws >= 5, "only {split_draws} split draws");
}

#[test]
fn collapsed_component_is_reported() {
    let data = IncompleteMatrix::complete(DMatrix::from_row_slice(3, 1, &[0.0, 0.1, 0.2]));
    let params = GmmParams::new(
        DVector::from_vec(vec![0.5, 0.5]),
        DMatrix::from_row_slice(2, 1, &[0.1, 1e6]),
        vec![Covariance::Diagonal(DVector::from_element(1, 1e-4)); 2],
    )
    .unwrap();
    let es = gmm::e_step(&data, &params).unwrap();
    let err = gmm::m_step(&data, &es, &params, 1e-6).unwrap_err();
    assert!(matches!(err, Error::DegenerateComponent { component: 1, .. }), "{err}");
    let err = gmm::fit_from(&data, params, &EmConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Em { iteration: 0, .. }), "{err}");
}

#[test]
fn fits_are_reproducible() {
    let mut r = rng(14);
    let x = random_mixture_data(&mut r, 60, 3, 2);
    let data = random_mask(&mut r, &x, 0.3);
    let a = gmm::fit(&data, 3, &EmConfig::default(), 77).unwrap();
    let b = gmm::fit(&data, 3, &EmConfig::default(), 77).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log_likelihood_trace, b.log_likelihood_trace);
}
