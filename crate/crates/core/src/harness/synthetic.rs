//! Synthetic benchmark data.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::seed;

/// Two isotropic unit-variance Gaussian blobs in `dim` dimensions whose
/// centres are `separation` apart along the all-ones direction. Rows are
/// class 0 first, then class 1.
pub fn two_blobs(per_class: usize, dim: usize, separation: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = seed::rng(seed);
    let shift = separation / (dim as f64).sqrt();
    let n = 2 * per_class;
    let mut x = DMatrix::zeros(n, dim);
    for i in 0..n {
        let offset = if i < per_class { 0.0 } else { shift };
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = z + offset;
        }
    }
    let labels = (0..n).map(|i| usize::from(i >= per_class)).collect();
    (x, labels)
}

/// Write rows with the label appended as the last column.
pub fn labelled_csv(x: &DMatrix<f64>, labels: &[usize]) -> String {
    let mut out = String::new();
    for (i, &label) in labels.iter().enumerate() {
        for v in x.row(i).iter() {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&label.to_string());
        out.push('\n');
    }
    out
}
