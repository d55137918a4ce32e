//! Synthetic missingness under the three classical mechanisms. Generators
//! only ever turn observed cells into missing ones; values are untouched.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;

use super::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// Missing completely at random: every cell is dropped independently with
/// probability `rate`.
pub fn apply_mcar(data: &IncompleteMatrix, rate: f64, seed: u64) -> Result<IncompleteMatrix> {
    check_probability("rate", rate)?;
    let mut rng = seed::rng(seed);
    let (n, d) = (data.nrows(), data.ncols());
    let mut drop = DMatrix::from_element(n, d, false);
    // Row-major draw order so the stream does not depend on storage layout.
    for i in 0..n {
        for j in 0..d {
            drop[(i, j)] = rng.random::<f64>() < rate;
        }
    }
    Ok(data.with_dropped(&drop))
}

/// One quadrant of a square image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    /// Row-major pixel indices covered by this quadrant of a `side x side` image.
    pub fn pixels(self, side: usize) -> Vec<usize> {
        let h = side / 2;
        let (r0, c0) = match self {
            Quadrant::TopLeft => (0, 0),
            Quadrant::TopRight => (0, h),
            Quadrant::BottomLeft => (h, 0),
            Quadrant::BottomRight => (h, h),
        };
        (r0..r0 + h)
            .flat_map(|r| (c0..c0 + h).map(move |c| r * side + c))
            .collect()
    }
}

/// Drop one uniformly chosen quadrant from `round(p_m * N)` uniformly chosen
/// images. Rows are unravelled `side x side` images.
pub fn apply_mar_quadrant(
    images: &IncompleteMatrix,
    p_m: f64,
    side: usize,
    seed: u64,
) -> Result<IncompleteMatrix> {
    check_probability("p_m", p_m)?;
    if side == 0 || side % 2 != 0 {
        return Err(Error::Shape(format!("image side must be even and positive, got {side}")));
    }
    if images.ncols() != side * side {
        return Err(Error::Shape(format!(
            "rows have {} pixels, expected {side}x{side} = {}",
            images.ncols(),
            side * side
        )));
    }
    let n = images.nrows();
    let count = ((p_m * n as f64).round() as usize).min(n);
    let mut rng = seed::rng(seed);
    let mut rows = index::sample(&mut rng, n, count).into_vec();
    rows.sort_unstable();

    let quadrant_pixels: Vec<Vec<usize>> = Quadrant::ALL.iter().map(|q| q.pixels(side)).collect();
    let mut drop = DMatrix::from_element(n, side * side, false);
    for &i in &rows {
        let q = rng.random_range(0..4);
        for &p in &quadrant_pixels[q] {
            drop[(i, p)] = true;
        }
    }
    Ok(images.with_dropped(&drop))
}

/// Linear-interpolation empirical quantile (position `(n - 1) q` in the
/// sorted sample).
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Not missing at random: per dimension, censor observed values strictly
/// above the column's empirical `quantile`.
pub fn apply_nmar_censor(data: &IncompleteMatrix, quantile_level: f64) -> Result<IncompleteMatrix> {
    if !(quantile_level > 0.0 && quantile_level < 1.0) {
        return Err(Error::Argument(format!(
            "quantile must lie in (0, 1), got {quantile_level}"
        )));
    }
    let (n, d) = (data.nrows(), data.ncols());
    let mut drop = DMatrix::from_element(n, d, false);
    for j in 0..d {
        let mut col = data.observed_column(j);
        if col.is_empty() {
            continue;
        }
        col.sort_by(f64::total_cmp);
        let threshold = quantile(&col, quantile_level);
        for i in 0..n {
            if let Some(v) = data.get(i, j) {
                drop[(i, j)] = v > threshold;
            }
        }
    }
    Ok(data.with_dropped(&drop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn grid(n: usize, d: usize) -> IncompleteMatrix {
        IncompleteMatrix::complete(DMatrix::from_fn(n, d, |i, j| (i * d + j) as f64))
    }

    #[test]
    fn mcar_rate_zero_and_one() {
        let x = grid(10, 7);
        assert_eq!(apply_mcar(&x, 0.0, 1).unwrap().mask(), x.mask());
        assert_eq!(apply_mcar(&x, 1.0, 1).unwrap().observed_count(), 0);
    }

    #[test]
    fn mcar_rejects_bad_rate() {
        assert!(matches!(apply_mcar(&grid(2, 2), 1.5, 0), Err(Error::Argument(_))));
        assert!(matches!(apply_mcar(&grid(2, 2), -0.1, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn mcar_observed_fraction_concentrates() {
        let x = grid(100, 100);
        let out = apply_mcar(&x, 0.3, 42).unwrap();
        let cells = 10_000.0;
        let frac = out.observed_count() as f64 / cells;
        let sd = (0.3f64 * 0.7 / cells).sqrt();
        assert!((frac - 0.7).abs() < 3.0 * sd, "observed fraction {frac}");
    }

    #[test]
    fn mcar_is_seed_deterministic_and_keeps_values() {
        let x = grid(20, 5);
        let a = apply_mcar(&x, 0.4, 9).unwrap();
        let b = apply_mcar(&x, 0.4, 9).unwrap();
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        for i in 0..20 {
            for j in 0..5 {
                if let Some(v) = a.get(i, j) {
                    assert_eq!(v, x.values()[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn quadrant_zero_rate_changes_nothing() {
        let x = grid(30, 16);
        assert!(apply_mar_quadrant(&x, 0.0, 4, 3).unwrap().is_fully_observed());
    }

    #[test]
    fn quadrant_of_2x2_is_one_pixel() {
        let x = grid(50, 4);
        let out = apply_mar_quadrant(&x, 1.0, 2, 3).unwrap();
        for i in 0..50 {
            let missing = out.row_pattern(i).iter().filter(|&&o| !o).count();
            assert_eq!(missing, 1);
        }
    }

    #[test]
    fn quadrant_frequencies_are_uniform() {
        let n = 1000;
        let side = 4;
        let x = grid(n, side * side);
        let out = apply_mar_quadrant(&x, 0.5, side, 11).unwrap();
        let quadrant_patterns: BTreeMap<Vec<bool>, Quadrant> = Quadrant::ALL
            .iter()
            .map(|&q| {
                let mut p = vec![true; side * side];
                for k in q.pixels(side) {
                    p[k] = false;
                }
                (p, q)
            })
            .collect();
        let mut counts: BTreeMap<Quadrant, usize> = BTreeMap::new();
        let mut modified = 0;
        for i in 0..n {
            let p = out.row_pattern(i);
            if p.iter().all(|&o| o) {
                continue;
            }
            modified += 1;
            let q = quadrant_patterns.get(&p).expect("row lost something other than one quadrant");
            *counts.entry(*q).or_default() += 1;
        }
        assert_eq!(modified, 500);
        let sd = (500.0f64 * 0.25 * 0.75).sqrt();
        for q in Quadrant::ALL {
            let c = counts.get(&q).copied().unwrap_or(0) as f64;
            assert!((c - 125.0).abs() < 3.0 * sd, "{q:?} selected {c} times");
        }
    }

    #[test]
    fn quadrant_shape_errors() {
        assert!(matches!(apply_mar_quadrant(&grid(3, 15), 0.5, 4, 0), Err(Error::Shape(_))));
        assert!(matches!(apply_mar_quadrant(&grid(3, 9), 0.5, 3, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn nmar_midpoint_quantile() {
        let x = IncompleteMatrix::complete(DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]));
        let out = apply_nmar_censor(&x, 0.5).unwrap();
        assert_eq!(out.row_pattern(0), vec![true]);
        assert_eq!(out.row_pattern(1), vec![true]);
        assert_eq!(out.row_pattern(2), vec![false]);
        assert_eq!(out.row_pattern(3), vec![false]);
    }

    #[test]
    fn nmar_high_quantile_removes_only_maxima() {
        let x = IncompleteMatrix::complete(DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 9.0, 5.0, 2.0, 3.0, 4.0],
        ));
        let out = apply_nmar_censor(&x, 1.0 - 1e-9).unwrap();
        assert_eq!(out.observed_count(), 4);
        assert!(!out.is_observed(1, 0));
        assert!(!out.is_observed(0, 1));
    }

    #[test]
    fn nmar_constant_column_unchanged() {
        let x = IncompleteMatrix::complete(DMatrix::from_element(5, 1, 2.0));
        assert!(apply_nmar_censor(&x, 0.3).unwrap().is_fully_observed());
    }
}
