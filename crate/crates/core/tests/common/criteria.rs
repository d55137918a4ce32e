//! Checks shared by the integration suites and the acceptance runner. Each
//! returns whether it held plus a one-line summary of what was measured.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use pckid::evaluation::{clustering_accuracy, hungarian};
use pckid::gmm::{self, terms, CovarianceKind, EmConfig};
use pckid::kernel::{build_kernel, EnsembleConfig, KernelMatrix};
use pckid::spectral::kernel_pca;
use pckid::IncompleteMatrix;

use super::*;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// One E-step and M-step from shared parameters, ours against the
/// reference, for ten iterations on each of 50 complete data sets.
pub fn em_matches_reference() -> Outcome {
    let floor = 1e-6;
    let mut worst = 0.0f64;
    let mut worst_ll = 0.0f64;
    for case in 0..50u64 {
        let mut r = rng(1000 + case);
        let k = r.random_range(1..=3);
        let d = r.random_range(1..=5);
        let n = r.random_range(30 * k..=200);
        let x = random_mixture_data(&mut r, n, d, k);
        let data = IncompleteMatrix::complete(x.clone());
        let kind = if case % 2 == 0 { CovarianceKind::Full } else { CovarianceKind::Diagonal };
        let cfg = EmConfig {
            max_iterations: 1,
            variance_floor: floor,
            covariance_kind: kind,
            convergence_tol: 0.0,
        };
        let mut params = gmm::init_params(&data, k, &cfg, case).unwrap();
        for _ in 0..10 {
            let reference = RefParams::from_params(&params);
            let (g_ref, ll_ref) = ref_e_step(&x, &reference);
            let es = match gmm::e_step(&data, &params) {
                Ok(es) => es,
                Err(e) => return Outcome::new(false, format!("case {case}: e_step failed: {e}")),
            };
            worst = worst.max((es.responsibilities.matrix() - &g_ref).amax());
            worst_ll = worst_ll.max((es.log_likelihood - ll_ref).abs() / ll_ref.abs().max(1.0));
            for y in &es.completions {
                if y != &x {
                    return Outcome::new(false, format!("case {case}: completion differs from observed row"));
                }
            }
            let next = match gmm::m_step(&data, &es, &params, floor) {
                Ok(p) => p,
                Err(e) => return Outcome::new(false, format!("case {case}: m_step failed: {e}")),
            };
            let ref_next = ref_m_step(&x, &g_ref, floor, kind == CovarianceKind::Diagonal);
            worst = worst.max(params_rel_diff(&next, &ref_next));
            let fast = gmm::fit_from(&data, params.clone(), &cfg).unwrap().params;
            worst = worst.max(params_rel_diff(&fast, &ref_next));
            params = next;
        }
    }
    Outcome::new(
        worst <= 1e-10 && worst_ll <= 1e-6,
        format!(
            "50 data sets x 10 iterations, max parameter/posterior deviation {worst:.2e} (tol 1e-10), \
             log-likelihood {worst_ll:.2e} (tol 1e-6)"
        ),
    )
}

/// Diagonal formulas against the full-matrix formulas with a diagonal
/// covariance.
pub fn diagonal_matches_full() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let mut r = rng(2000 + case);
        let d = r.random_range(1..=6);
        let mu = DVector::from_fn(d, |_, _| 2.0 * normal(&mut r));
        let var = DVector::from_fn(d, |_, _| r.random_range(0.1..3.0));
        let pattern: Vec<bool> = (0..d).map(|_| r.random_bool(0.6)).collect();
        let x = DVector::from_fn(d, |_, _| 2.0 * normal(&mut r));
        let new_mean = DVector::from_fn(d, |_, _| normal(&mut r));
        let gamma: f64 = r.random();
        let sigma = DMatrix::from_diagonal(&var);

        let y_diag = terms::diagonal_completion(&mu, &var, &pattern, &x);
        let y_full = terms::full_completion(&mu, &sigma, &pattern, &x).unwrap();
        worst = worst.max((&y_diag - &y_full).amax());

        let w_diag = terms::diagonal_omega(gamma, &y_diag, &new_mean, &var, &pattern);
        let w_full = terms::full_omega(gamma, &y_full, &new_mean, &sigma, &pattern).unwrap();
        worst = worst.max((&w_diag - w_full.diagonal()).amax());
    }
    Outcome::new(worst <= 1e-10, format!("100 cases, max deviation {worst:.2e} (tol 1e-10)"))
}

/// Log-likelihood trace of full-covariance EM on complete data.
pub fn em_is_monotone() -> Outcome {
    let mut worst_drop = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(3000 + seed);
        let x = random_mixture_data(&mut r, 150, 3, 3);
        let data = IncompleteMatrix::complete(x);
        let cfg = EmConfig {
            max_iterations: 10,
            variance_floor: 1e-6,
            covariance_kind: CovarianceKind::Full,
            convergence_tol: 0.0,
        };
        let fit = match gmm::fit(&data, 3, &cfg, seed) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("seed {seed}: fit failed: {e}")),
        };
        for w in fit.log_likelihood_trace.windows(2) {
            worst_drop = worst_drop.max((w[0] - w[1]) / w[0].abs());
        }
    }
    Outcome::new(
        worst_drop <= 1e-8,
        format!("20 seeds, largest relative decrease {worst_drop:.2e} (slack 1e-8)"),
    )
}

/// Known two-component mixture, N = 2000, about 30% of cells hidden.
/// `mar` hides coordinates 1.. with a rate that depends on coordinate 0
/// (always observed); otherwise every cell is hidden independently.
pub fn recovers_means(mar: bool) -> Outcome {
    let mut good = 0;
    let mut errors = Vec::new();
    for seed in 0..20u64 {
        let mut r = rng(4000 + seed);
        let d = 3;
        let means = [DVector::zeros(d), DVector::from_element(d, 3.0)];
        let covs = [random_spd(&mut r, d, 0.4, 0.8), random_spd(&mut r, d, 0.4, 0.8)];
        let (x, _) = sample_mixture(&mut r, 2000, &[0.5, 0.5], &means, &covs);
        let data = if mar {
            let mask = DMatrix::from_fn(x.nrows(), d, |i, j| {
                j == 0 || r.random::<f64>() >= if x[(i, 0)] < 1.5 { 0.25 } else { 0.65 }
            });
            IncompleteMatrix::new(x.clone(), mask).unwrap()
        } else {
            random_mask(&mut r, &x, 0.3)
        };
        let cfg = EmConfig::standalone(CovarianceKind::Full);
        let best = (0..3)
            .filter_map(|s| gmm::fit(&data, 2, &cfg, seed * 10 + s).ok())
            .max_by(|a, b| {
                a.log_likelihood_trace
                    .last()
                    .unwrap()
                    .total_cmp(b.log_likelihood_trace.last().unwrap())
            });
        let Some(fit) = best else {
            errors.push(f64::INFINITY);
            continue;
        };
        let dist = |a: usize, b: usize| (fit.params.mean(a) - &means[b]).norm();
        let err = f64::min(
            dist(0, 0).max(dist(1, 1)),
            dist(0, 1).max(dist(1, 0)),
        );
        errors.push(err);
        if err <= 0.15 {
            good += 1;
        }
    }
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        good >= 18,
        format!("{good}/20 seeds within 0.15 (need 18), worst mean error {worst:.3}"),
    )
}

/// Symmetry, range, PSD and Cauchy–Schwarz of PCKID kernels on random
/// incomplete data.
pub fn kernel_properties() -> Outcome {
    let mut min_eig = f64::INFINITY;
    for case in 0..20u64 {
        let mut r = rng(5000 + case);
        let n = r.random_range(20..=50);
        let d = r.random_range(2..=5);
        let k = r.random_range(2..=3);
        let x = random_mixture_data(&mut r, n, d, k);
        let data = random_mask(&mut r, &x, 0.2);
        let cfg = EnsembleConfig {
            initializations: 2,
            max_components: 4,
            base_seed: case,
            ..EnsembleConfig::default()
        };
        let pk = match build_kernel(&data, &cfg) {
            Ok(pk) => pk,
            Err(e) => return Outcome::new(false, format!("case {case}: {e}")),
        };
        let m = pk.kernel.matrix();
        if m != &m.transpose() {
            return Outcome::new(false, format!("case {case}: kernel not symmetric"));
        }
        if m.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
            return Outcome::new(false, format!("case {case}: entry outside [0, 1]"));
        }
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)].powi(2) > m[(i, i)] * m[(j, j)] * (1.0 + 1e-12) {
                    return Outcome::new(false, format!("case {case}: Cauchy-Schwarz fails at ({i}, {j})"));
                }
            }
        }
        min_eig = min_eig.min(pk.kernel.min_eigenvalue());
    }
    Outcome::new(
        min_eig >= -1e-8,
        format!("20 kernels symmetric, in [0, 1], Cauchy-Schwarz holds; min eigenvalue {min_eig:.2e}"),
    )
}

/// Hungarian against enumeration (cost and lexicographic tie-break) and
/// accuracy against a brute-force label search.
pub fn assignment_matches_brute_force() -> Outcome {
    let mut r = rng(6000);
    for case in 0..200 {
        let k = r.random_range(1..=6);
        let cost = DMatrix::from_fn(k, k, |_, _| r.random_range(0..10) as f64);
        let a = hungarian(&cost).unwrap();
        let (best, perm) = brute_force_assignment(&cost);
        if a.cost != best || a.columns != perm {
            return Outcome::new(false, format!("case {case}: {:?} vs brute force {perm:?}", a.columns));
        }
        let n = r.random_range(1..=40);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        if clustering_accuracy(&truth, &pred).unwrap() != brute_force_accuracy(&truth, &pred) {
            return Outcome::new(false, format!("case {case}: accuracy differs from brute force"));
        }
    }
    let examples = [
        (vec![0, 1, 2, 0], vec![0, 1, 2, 0], 1.0),
        (vec![0, 0, 1, 1], vec![1, 1, 0, 0], 1.0),
        (vec![0, 0, 1, 1], vec![0, 1, 0, 1], 0.5),
    ];
    for (t, p, want) in examples {
        if clustering_accuracy(&t, &p).unwrap() != want {
            return Outcome::new(false, format!("accuracy of {p:?} against {t:?} is not {want}"));
        }
    }
    Outcome::new(true, "200 random instances and the documented accuracy examples agree exactly".into())
}

/// Kernel PCA on `U diag(λ) Uᵀ` with known spectrum.
pub fn kpca_contract() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mut r = rng(7000 + case);
        let n = r.random_range(5..=30);
        let k = r.random_range(1..=n.min(5));
        let u = random_orthogonal(&mut r, n);
        let mut lambda: Vec<f64> = (0..n).map(|i| (i as f64 + r.random::<f64>() * 0.5) / n as f64 * 5.0).collect();
        if n > k + 1 {
            lambda[0] = 0.0;
        }
        let m = &u * DMatrix::from_diagonal(&DVector::from_vec(lambda.clone())) * u.transpose();
        let kernel = KernelMatrix::new((&m + m.transpose()) * 0.5).unwrap();
        let emb = kernel_pca(&kernel, k).unwrap();
        let z = &emb.coords;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
        let top: Vec<usize> = order[..k].to_vec();
        let top_vals = DVector::from_iterator(k, top.iter().map(|&i| lambda[i]));
        worst = worst.max((z.transpose() * z - DMatrix::from_diagonal(&top_vals)).amax());
        let uk = u.select_columns(&top);
        let best = &uk * DMatrix::from_diagonal(&top_vals) * uk.transpose();
        worst = worst.max((z * z.transpose() - best).amax());
    }
    Outcome::new(worst <= 1e-8, format!("20 matrices, max deviation {worst:.2e} (tol 1e-8)"))
}
