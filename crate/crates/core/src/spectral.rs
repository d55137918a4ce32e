//! Spectral clustering: kernel PCA embedding followed by k-means, plus the
//! RBF baseline kernel and its median-distance width heuristic.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::seed;

/// Lloyd iterations per restart before giving up on a fixpoint.
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Fraction of the median pairwise distance used as the RBF width.
pub const MEDIAN_FRACTION: f64 = 0.2;

/// `0.2 x` the median of all `N(N-1)/2` pairwise Euclidean distances.
pub fn median_heuristic_sigma(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Argument("need at least two points for pairwise distances".into()));
    }
    let rows = row_major(x);
    let d = x.ncols();
    let mut dists: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..n).map(move |j| sq_dist(&rows[i * d..(i + 1) * d], &rows[j * d..(j + 1) * d]).sqrt())
        })
        .collect();
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    let sigma = MEDIAN_FRACTION * median;
    if !(sigma > 0.0) {
        return Err(Error::DegenerateKernel(
            "median pairwise distance is zero; RBF width would be 0".into(),
        ));
    }
    Ok(sigma)
}

/// `κ_ij = exp(−‖x_i − x_j‖² / (2σ²))`.
pub fn rbf_kernel(x: &DMatrix<f64>, sigma: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!("RBF width must be positive, got {sigma}")));
    }
    let (n, d) = x.shape();
    let rows = row_major(x);
    let denom = 2.0 * sigma * sigma;
    let mut k = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in i + 1..n {
            let v = (-sq_dist(&rows[i * d..(i + 1) * d], &rows[j * d..(j + 1) * d]) / denom).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    KernelMatrix::new(k)
}

/// Kernel PCA coordinates `Z = E_k Λ_k^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `N x k`.
    pub coords: DMatrix<f64>,
    /// The `k` leading eigenvalues after clamping at zero, descending.
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.coords.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::io("<csv>", std::io::Error::other(e.to_string())))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KpcaOptions {
    /// Double-centre the kernel before the eigendecomposition. Off by
    /// default.
    pub center: bool,
}

pub fn kernel_pca(kernel: &KernelMatrix, k: usize) -> Result<Embedding> {
    kernel_pca_with(kernel, k, KpcaOptions::default())
}

/// Leading-`k` eigenpairs of the kernel scaled by `√λ`. Eigenvalues are
/// sorted descending (ties keep solver order), negatives clamp to zero, and
/// each eigenvector is signed so its largest-magnitude entry is positive.
pub fn kernel_pca_with(kernel: &KernelMatrix, k: usize, options: KpcaOptions) -> Result<Embedding> {
    let n = kernel.size();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("embedding dimension {k} must lie in 1..={n}")));
    }
    let mut m = kernel.matrix().clone();
    if options.center {
        let row_means: Vec<f64> = (0..n).map(|i| m.row(i).mean()).collect();
        let total = row_means.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += total - row_means[i] - row_means[j];
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut coords = DMatrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let v = eig.eigenvectors.column(idx);
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
            .0;
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..n {
            coords[(i, c)] = v[i] * scale;
        }
        eigenvalues.push(lambda);
    }
    Ok(Embedding { coords, eigenvalues })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x d` cluster centres.
    pub centers: DMatrix<f64>,
    /// Sum of squared distances to the assigned centres.
    pub cost: f64,
    /// Index of the restart that produced this result.
    pub restart: usize,
    /// Lloyd iterations used by that restart.
    pub iterations: usize,
}

fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        out.extend(x.row(i).iter());
    }
    out
}

/// Squared Euclidean distance with four interleaved partial sums (fixed
/// order, so reproducible).
#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    for (ca, cb) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        for l in 0..4 {
            let t = ca[l] - cb[l];
            lanes[l] += t * t;
        }
    }
    let tail = a.len() / 4 * 4;
    let rest: f64 = a[tail..].iter().zip(&b[tail..]).map(|(x, y)| (x - y) * (x - y)).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + rest
}

struct Lloyd<'a> {
    rows: &'a [f64],
    n: usize,
    d: usize,
    k: usize,
}

impl Lloyd<'_> {
    fn point(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    /// Nearest centre per point; the lowest index wins ties.
    fn assign(&self, centers: &[f64], labels: &mut [usize], dist: &mut [f64]) {
        for i in 0..self.n {
            let p = self.point(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..self.k {
                let dc = sq_dist(p, &centers[c * self.d..(c + 1) * self.d]);
                if dc < best.1 {
                    best = (c, dc);
                }
            }
            labels[i] = best.0;
            dist[i] = best.1;
        }
    }

    /// Recompute centres as cluster means. An empty cluster takes the point
    /// farthest from its current centre (among clusters with more than one
    /// member) and that point moves to it.
    fn update(&self, centers: &mut [f64], labels: &mut [usize], dist: &mut [f64]) {
        let mut counts = vec![0usize; self.k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        for c in 0..self.k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..self.n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None, |best: Option<(usize, f64)>, i| match best {
                    Some((_, bd)) if bd >= dist[i] => best,
                    _ => Some((i, dist[i])),
                });
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                dist[i] = 0.0;
            }
        }
        centers.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let c = labels[i];
            for (t, &v) in centers[c * self.d..(c + 1) * self.d].iter_mut().zip(self.point(i)) {
                *t += v;
            }
        }
        for c in 0..self.k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centers[c * self.d..(c + 1) * self.d].iter_mut().for_each(|v| *v *= inv);
            }
        }
    }

    fn cost(&self, centers: &[f64], labels: &[usize]) -> f64 {
        (0..self.n)
            .map(|i| sq_dist(self.point(i), &centers[labels[i] * self.d..(labels[i] + 1) * self.d]))
            .sum()
    }

    /// One restart; with `track` also returns the cost after every half-step.
    fn run(&self, seed: u64, track: bool) -> (Vec<usize>, Vec<f64>, f64, usize, Vec<f64>) {
        let mut rng = seed::rng(seed);
        let picks = index::sample(&mut rng, self.n, self.k).into_vec();
        let mut centers: Vec<f64> = picks.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        let mut labels = vec![0usize; self.n];
        let mut dist = vec![0.0; self.n];
        let mut history = Vec::new();
        self.assign(&centers, &mut labels, &mut dist);
        if track {
            history.push(dist.iter().sum());
        }
        let mut iterations = 0;
        for _ in 0..MAX_LLOYD_ITERATIONS {
            iterations += 1;
            self.update(&mut centers, &mut labels, &mut dist);
            if track {
                history.push(self.cost(&centers, &labels));
            }
            let previous = labels.clone();
            self.assign(&centers, &mut labels, &mut dist);
            if track {
                history.push(dist.iter().sum());
            }
            if labels == previous {
                break;
            }
        }
        let cost = self.cost(&centers, &labels);
        (labels, centers, cost, iterations, history)
    }
}

fn check_kmeans_args(n: usize, k: usize, restarts: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Argument(format!("cannot form {k} clusters from {n} points")));
    }
    if restarts == 0 {
        return Err(Error::Argument("need at least one restart".into()));
    }
    Ok(())
}

/// Lloyd's k-means with `restarts` random distinct-row initialisations;
/// the lowest-cost restart wins (lowest restart index on ties).
pub fn kmeans(x: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let (n, d) = x.shape();
    check_kmeans_args(n, k, restarts)?;
    let rows = row_major(x);
    let lloyd = Lloyd { rows: &rows, n, d, k };
    let runs: Vec<_> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd.run(seed::derive(seed, &[r as u64]), false))
        .collect();
    let (restart, (labels, centers, cost, iterations, _)) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1 .2 < best.1 .2 { cur } else { best })
        .expect("restarts >= 1");
    Ok(KMeansResult {
        labels,
        centers: DMatrix::from_row_slice(k, d, &centers),
        cost,
        restart,
        iterations,
    })
}

/// Cost after each half-step (assignment, update) of a single restart.
/// Exposed for checking that Lloyd never increases the objective.
pub fn kmeans_cost_history(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<f64>> {
    let (n, d) = x.shape();
    check_kmeans_args(n, k, 1)?;
    let rows = row_major(x);
    let lloyd = Lloyd { rows: &rows, n, d, k };
    Ok(lloyd.run(seed::derive(seed, &[0]), true).4)
}

/// Embed with kernel PCA into `k` dimensions and cluster with k-means.
pub fn spectral_cluster(kernel: &KernelMatrix, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let embedding = kernel_pca(kernel, k)?;
    Ok(kmeans(&embedding.coords, k, restarts, seed)?.labels)
}
