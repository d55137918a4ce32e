//! Shared fixtures and independent reference implementations.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pckid::IncompleteMatrix;

pub mod criteria;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random symmetric positive definite matrix with eigenvalues in
/// roughly `[lo, lo + scale]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let q = a.qr().q();
    let eig = DVector::from_fn(d, |_, _| lo + scale * rng.random::<f64>());
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

/// Random orthogonal matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| normal(rng)).qr().q()
}

/// Sample `n` rows from a mixture; returns data and component labels.
pub fn sample_mixture(
    rng: &mut ChaCha8Rng,
    n: usize,
    weights: &[f64],
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
) -> (DMatrix<f64>, Vec<usize>) {
    let d = means[0].len();
    let chols: Vec<DMatrix<f64>> = covs.iter().map(|c| c.clone().cholesky().unwrap().l()).collect();
    let mut x = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (c, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = c;
                break;
            }
        }
        let z = DVector::from_fn(d, |_, _| normal(rng));
        let row = &means[k] + &chols[k] * z;
        x.set_row(i, &row.transpose());
        labels.push(k);
    }
    (x, labels)
}

/// A random well-posed mixture dataset with `k` components in `d` dims.
pub fn random_mixture_data(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> DMatrix<f64> {
    let means: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(d, |_, _| 4.0 * normal(rng))).collect();
    let covs: Vec<DMatrix<f64>> = (0..k).map(|_| random_spd(rng, d, 0.3, 1.5)).collect();
    let weights = vec![1.0 / k as f64; k];
    sample_mixture(rng, n, &weights, &means, &covs).0
}

/// Hide each cell with probability `rate`, keeping at least one observed
/// cell per row and per column.
pub fn random_mask(rng: &mut ChaCha8Rng, x: &DMatrix<f64>, rate: f64) -> IncompleteMatrix {
    let (n, d) = x.shape();
    let mut mask = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() >= rate);
    for i in 0..n {
        if !mask.row(i).iter().any(|&o| o) {
            mask[(i, rng.random_range(0..d))] = true;
        }
    }
    for j in 0..d {
        if !mask.column(j).iter().any(|&o| o) {
            mask[(rng.random_range(0..n), j)] = true;
        }
    }
    IncompleteMatrix::new(x.clone(), mask).unwrap()
}

/// Mixture parameters in plain form for the reference EM.
#[derive(Debug, Clone)]
pub struct RefParams {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl RefParams {
    pub fn from_params(p: &pckid::gmm::GmmParams) -> Self {
        Self {
            weights: p.weights.iter().copied().collect(),
            means: (0..p.n_components()).map(|k| p.mean(k)).collect(),
            covs: p.covariances.iter().map(|c| c.to_dense()).collect(),
        }
    }
}

/// Log of the multivariate normal density, via an explicit inverse and an
/// LU determinant.
pub fn ref_log_density(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let inv = sigma.clone().try_inverse().expect("invertible covariance");
    let det = sigma.clone().lu().determinant();
    let r = x - mu;
    let maha = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + maha)
}

/// Standard complete-data E-step: responsibilities and log-likelihood.
pub fn ref_e_step(x: &DMatrix<f64>, p: &RefParams) -> (DMatrix<f64>, f64) {
    let n = x.nrows();
    let k = p.weights.len();
    let mut gamma = DMatrix::zeros(n, k);
    let mut ll = 0.0;
    for i in 0..n {
        let xi = x.row(i).transpose();
        let logs: Vec<f64> = (0..k)
            .map(|c| p.weights[c].ln() + ref_log_density(&xi, &p.means[c], &p.covs[c]))
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        for c in 0..k {
            gamma[(i, c)] = (logs[c] - m).exp() / s;
        }
        ll += m + s.ln();
    }
    (gamma, ll)
}

/// Standard complete-data M-step with `floor` added to the diagonal.
pub fn ref_m_step(x: &DMatrix<f64>, gamma: &DMatrix<f64>, floor: f64, diagonal: bool) -> RefParams {
    let (n, d) = x.shape();
    let k = gamma.ncols();
    let mut out = RefParams {
        weights: vec![],
        means: vec![],
        covs: vec![],
    };
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| gamma[(i, c)]).sum();
        let mut mu = DVector::zeros(d);
        for i in 0..n {
            mu += x.row(i).transpose() * gamma[(i, c)];
        }
        mu /= nk;
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let r = x.row(i).transpose() - &mu;
            cov += &r * r.transpose() * gamma[(i, c)];
        }
        cov /= nk;
        if diagonal {
            cov = DMatrix::from_diagonal(&cov.diagonal());
        }
        for j in 0..d {
            cov[(j, j)] += floor;
        }
        out.weights.push(nk / n as f64);
        out.means.push(mu);
        out.covs.push(cov);
    }
    out
}

/// Largest `|a - b| / max(1, |b|)` over matching entries.
pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn params_rel_diff(p: &pckid::gmm::GmmParams, r: &RefParams) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..r.weights.len() {
        worst = worst.max((p.weights[c] - r.weights[c]).abs());
        worst = worst.max(max_rel_diff(&DMatrix::from_column_slice(r.means[c].len(), 1, p.mean(c).as_slice()), &DMatrix::from_column_slice(r.means[c].len(), 1, r.means[c].as_slice())));
        worst = worst.max(max_rel_diff(&p.covariances[c].to_dense(), &r.covs[c]));
    }
    worst
}

/// Every permutation of `0..k`, in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Minimum assignment cost and the lexicographically first permutation
/// attaining it, by enumeration.
pub fn brute_force_assignment(cost: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let k = cost.nrows();
    let mut best = (f64::INFINITY, vec![]);
    for p in permutations(k) {
        let c: f64 = (0..k).map(|i| cost[(i, p[i])]).sum();
        if c < best.0 {
            best = (c, p);
        }
    }
    best
}

/// Accuracy by trying every label mapping.
pub fn brute_force_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let k = truth.iter().chain(pred).max().map_or(1, |m| m + 1);
    let mut best = 0usize;
    for p in permutations(k) {
        let hits = truth.iter().zip(pred).filter(|(t, q)| p[**q] == **t).count();
        best = best.max(hits);
    }
    best as f64 / truth.len() as f64
}

/// Two well-separated blobs: `per_class` rows each, centres `gap` apart on
/// every coordinate.
pub fn separated_blobs(rng: &mut ChaCha8Rng, per_class: usize, d: usize, gap: f64) -> (DMatrix<f64>, Vec<usize>) {
    let n = 2 * per_class;
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= per_class)).collect();
    let x = DMatrix::from_fn(n, d, |i, _| 0.3 * normal(rng) + gap * labels[i] as f64);
    (x, labels)
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Whether two classes of 2-d points can be split by a line with positive
/// margin; scans directions on a fine angular grid.
pub fn linearly_separable(coords: &DMatrix<f64>, labels: &[usize]) -> bool {
    let steps = 3600;
    (0..steps).any(|s| {
        let t = std::f64::consts::PI * s as f64 / steps as f64;
        let (c, si) = (t.cos(), t.sin());
        let proj = |i: usize| coords[(i, 0)] * c + coords[(i, 1)] * si;
        let range = |cls: usize| {
            (0..labels.len())
                .filter(|&i| labels[i] == cls)
                .map(proj)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (a, b) = (range(0), range(1));
        a.1 < b.0 || b.1 < a.0
    })
}

/// Workspace root (two levels above this crate).
pub fn repo_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn mnist_files() -> (std::path::PathBuf, std::path::PathBuf) {
    let dir = repo_root().join("data/mnist-5-6");
    (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))
}
