use nalgebra::{DMatrix, DVector};
use rand::seq::index;

use super::params::{Covariance, GmmParams};
use super::{CovarianceKind, EmConfig};
use crate::dataset::{impute, ImputationStrategy, IncompleteMatrix};
use crate::error::{Error, Result};
use crate::seed;

/// Starting parameters for EM:
///
/// 1. mean-impute a working copy of the data;
/// 2. pick `k` distinct random rows as centres;
/// 3. one k-means round (assign every row to its nearest centre, then
///    recompute the centres);
/// 4. means, covariances and weights from the resulting clusters.
///
/// Covariances are the per-cluster population covariances plus the
/// variance floor, so singleton and empty clusters end up at `floor * I`.
/// The imputed copy is dropped once the parameters are computed.
pub fn init_params(data: &IncompleteMatrix, k: usize, config: &EmConfig, seed: u64) -> Result<GmmParams> {
    let n = data.nrows();
    let d = data.ncols();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "cannot draw {k} initial centres from {n} rows"
        )));
    }
    let filled = impute(data, ImputationStrategy::Mean)?;
    let mut rng = seed::rng(seed);
    let picks = index::sample(&mut rng, n, k).into_vec();
    let centres = filled.select_rows(&picks);

    // Squared distances to every centre, accumulated column by column.
    let mut dist = DMatrix::<f64>::zeros(n, k);
    for j in 0..d {
        let col = filled.column(j);
        for c in 0..k {
            let centre = centres[(c, j)];
            let out = &mut dist.as_mut_slice()[c * n..(c + 1) * n];
            for (o, &x) in out.iter_mut().zip(col.iter()) {
                *o += (x - centre) * (x - centre);
            }
        }
    }
    let mut assignment = vec![0usize; n];
    let mut counts = vec![0usize; k];
    for i in 0..n {
        let mut best = (0, f64::INFINITY);
        for c in 0..k {
            if dist[(i, c)] < best.1 {
                best = (c, dist[(i, c)]);
            }
        }
        assignment[i] = best.0;
        counts[best.0] += 1;
    }

    let mut means = centres;
    for c in 0..k {
        if counts[c] > 0 {
            means.row_mut(c).fill(0.0);
        }
    }
    for j in 0..d {
        for i in 0..n {
            let c = assignment[i];
            means[(c, j)] += filled[(i, j)] / counts[c] as f64;
        }
    }

    let floor = config.variance_floor;
    let covariances = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            let denom = members.len().max(1) as f64;
            match config.covariance_kind {
                CovarianceKind::Full => {
                    let mu = means.row(c);
                    let mut scatter = DMatrix::<f64>::zeros(d, d);
                    for &i in &members {
                        let r = (filled.row(i) - mu).transpose();
                        scatter += &r * r.transpose();
                    }
                    let mut cov = scatter / denom;
                    for j in 0..d {
                        cov[(j, j)] += floor;
                    }
                    Covariance::Full(cov)
                }
                CovarianceKind::Diagonal => Covariance::Diagonal(DVector::from_fn(d, |j, _| {
                    let m = means[(c, j)];
                    let ss: f64 = members.iter().map(|&i| (filled[(i, j)] - m).powi(2)).sum();
                    ss / denom + floor
                })),
            }
        })
        .collect();

    let weights = DVector::from_iterator(k, counts.iter().map(|&c| c as f64 / n as f64));
    GmmParams::new(weights, means, covariances)
}
