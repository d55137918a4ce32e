//! Incomplete data: the observed-mask matrix, CSV interchange, synthetic
//! missingness, preprocessing and baseline imputers.

mod csv_io;
mod missingness;
mod preprocess;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use csv_io::{load_csv, load_csv_with, read_csv, write_csv, write_mask_csv, CsvOptions};
pub use missingness::{apply_mar_quadrant, apply_mcar, apply_nmar_censor, Quadrant};
pub use preprocess::{
    impute, remove_zero_variance, standardize_observed, ImputationStrategy, Standardization,
};

/// Placeholder written into cells that are not observed. Consumers must go
/// through the mask; the NaN makes accidental reads show up in results.
pub const MISSING: f64 = f64::NAN;

/// An `N x d` matrix together with its observed mask (`true` = observed).
///
/// Values at unobserved positions are placeholders and are never read by
/// any operation in this crate.
#[derive(Debug, Clone)]
pub struct IncompleteMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

/// Equal masks and equal observed values; placeholders are ignored.
impl PartialEq for IncompleteMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &m)| !m || a == b)
    }
}

impl IncompleteMatrix {
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        Ok(Self { values, mask })
    }

    /// A fully observed matrix.
    pub fn complete(values: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self { values, mask }
    }

    /// Build from row-major rows where `None` marks a missing cell.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "row {bad} has {} entries, expected {d}",
                rows[bad].len()
            )));
        }
        let values = DMatrix::from_fn(n, d, |i, j| rows[i][j].unwrap_or(MISSING));
        let mask = DMatrix::from_fn(n, d, |i, j| rows[i][j].is_some());
        Ok(Self { values, mask })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Raw values, placeholders included.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    pub fn row_pattern(&self, i: usize) -> Vec<bool> {
        (0..self.ncols()).map(|j| self.mask[(i, j)]).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Observed values of column `j`, in row order.
    pub fn observed_column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows()).filter_map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            mask: self.mask.select_rows(rows),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(cols),
            mask: self.mask.select_columns(cols),
        }
    }

    /// Overwrite every unobserved cell with `placeholder`.
    pub fn with_placeholder(&self, placeholder: f64) -> Self {
        let mut values = self.values.clone();
        for (v, &m) in values.iter_mut().zip(self.mask.iter()) {
            if !m {
                *v = placeholder;
            }
        }
        Self {
            values,
            mask: self.mask.clone(),
        }
    }

    /// Same as `self` with the cells flagged in `drop` turned missing.
    pub(crate) fn with_dropped(&self, drop: &DMatrix<bool>) -> Self {
        let mut out = self.clone();
        for ((v, m), &d) in out
            .values
            .iter_mut()
            .zip(out.mask.iter_mut())
            .zip(drop.iter())
        {
            if d && *m {
                *m = false;
                *v = MISSING;
            }
        }
        out
    }

    /// Canonical byte encoding: shape, mask, then observed values only.
    /// Two matrices that differ only in placeholders encode identically.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let (n, d) = self.values.shape();
        let mut out = Vec::with_capacity(16 + n * d * 9);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..d {
                match self.get(i, j) {
                    Some(v) => {
                        out.push(1);
                        out.extend_from_slice(&v.to_bits().to_le_bytes());
                    }
                    None => out.push(0),
                }
            }
        }
        out
    }
}

/// Rows that share one missingness pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternGroup {
    pub pattern: Vec<bool>,
    pub row_indices: Vec<usize>,
}

impl PatternGroup {
    /// Indices of the observed coordinates.
    pub fn observed(&self) -> Vec<usize> {
        observed_indices(&self.pattern)
    }

    pub fn missing(&self) -> Vec<usize> {
        self.pattern
            .iter()
            .enumerate()
            .filter_map(|(j, &o)| (!o).then_some(j))
            .collect()
    }
}

pub(crate) fn observed_indices(pattern: &[bool]) -> Vec<usize> {
    pattern
        .iter()
        .enumerate()
        .filter_map(|(j, &o)| o.then_some(j))
        .collect()
}

/// Render a pattern as a `0/1` string, observed = `1`.
pub fn pattern_string(pattern: &[bool]) -> String {
    pattern.iter().map(|&o| if o { '1' } else { '0' }).collect()
}

/// Partition rows by identical mask rows. Groups are ordered
/// lexicographically by pattern (`false < true`), rows ascending within a
/// group.
pub fn group_by_pattern(data: &IncompleteMatrix) -> Vec<PatternGroup> {
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..data.nrows() {
        groups.entry(data.row_pattern(i)).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(pattern, row_indices)| PatternGroup {
            pattern,
            row_indices,
        })
        .collect()
}
