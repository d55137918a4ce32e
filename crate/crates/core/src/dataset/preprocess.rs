use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::IncompleteMatrix;
use crate::error::{Error, Result};

/// Per-dimension shift and scale applied by [`standardize_observed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation of the observed entries. Zero-std
    /// dimensions are centred but not scaled.
    pub std: Vec<f64>,
}

/// Centre and scale every dimension using its observed entries only.
pub fn standardize_observed(data: &IncompleteMatrix) -> Result<(IncompleteMatrix, Standardization)> {
    let (n, d) = (data.nrows(), data.ncols());
    let mut mean = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    for j in 0..d {
        let col = data.observed_column(j);
        if col.is_empty() {
            return Err(Error::EmptyDimension { dim: j });
        }
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64;
        mean.push(m);
        std.push(var.sqrt());
    }
    let mut values = data.values().clone();
    for j in 0..d {
        let scale = if std[j] > 0.0 { std[j] } else { 1.0 };
        for i in 0..n {
            if data.is_observed(i, j) {
                values[(i, j)] = (values[(i, j)] - mean[j]) / scale;
            }
        }
    }
    let out = IncompleteMatrix::new(values, data.mask().clone())?;
    Ok((out, Standardization { mean, std }))
}

/// Drop dimensions whose observed values are constant or absent. Returns
/// the reduced matrix and the kept column indices.
pub fn remove_zero_variance(data: &IncompleteMatrix) -> Result<(IncompleteMatrix, Vec<usize>)> {
    let kept: Vec<usize> = (0..data.ncols())
        .filter(|&j| {
            let mut it = (0..data.nrows()).filter_map(|i| data.get(i, j));
            match it.next() {
                None => false,
                Some(first) => it.any(|v| v != first),
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::NoDimensionsLeft);
    }
    Ok((data.select_columns(&kept), kept))
}

/// Baseline single-value imputers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationStrategy {
    Zero,
    Mean,
    Median,
    MostFrequent,
}

impl ImputationStrategy {
    pub const ALL: [ImputationStrategy; 4] = [
        ImputationStrategy::Zero,
        ImputationStrategy::Mean,
        ImputationStrategy::Median,
        ImputationStrategy::MostFrequent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImputationStrategy::Zero => "zero",
            ImputationStrategy::Mean => "mean",
            ImputationStrategy::Median => "median",
            ImputationStrategy::MostFrequent => "most_frequent",
        }
    }

    /// Fill value for one dimension given its observed entries.
    fn fill_value(self, observed: &mut [f64]) -> Option<f64> {
        if self == ImputationStrategy::Zero {
            return Some(0.0);
        }
        if observed.is_empty() {
            return None;
        }
        Some(match self {
            ImputationStrategy::Zero => unreachable!(),
            ImputationStrategy::Mean => observed.iter().sum::<f64>() / observed.len() as f64,
            ImputationStrategy::Median => {
                observed.sort_by(f64::total_cmp);
                let n = observed.len();
                if n % 2 == 1 {
                    observed[n / 2]
                } else {
                    0.5 * (observed[n / 2 - 1] + observed[n / 2])
                }
            }
            ImputationStrategy::MostFrequent => {
                // Longest run in sorted order; the smallest value wins ties.
                observed.sort_by(f64::total_cmp);
                let mut best = (observed[0], 0usize);
                let mut start = 0;
                for k in 1..=observed.len() {
                    if k == observed.len() || observed[k] != observed[start] {
                        if k - start > best.1 {
                            best = (observed[start], k - start);
                        }
                        start = k;
                    }
                }
                best.0
            }
        })
    }
}

impl FromStr for ImputationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            "most_frequent" | "mode" => Ok(Self::MostFrequent),
            other => Err(Error::Argument(format!(
                "unknown imputer `{other}` (expected zero, mean, median or most_frequent)"
            ))),
        }
    }
}

/// Complete the matrix by filling each missing cell with a statistic of
/// the observed entries of its dimension.
pub fn impute(data: &IncompleteMatrix, strategy: ImputationStrategy) -> Result<DMatrix<f64>> {
    let (n, d) = (data.nrows(), data.ncols());
    let mut out = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut col = data.observed_column(j);
        let needs_fill = col.len() < n;
        let fill = if needs_fill {
            strategy
                .fill_value(&mut col)
                .ok_or(Error::EmptyDimension { dim: j })?
        } else {
            0.0
        };
        for i in 0..n {
            out[(i, j)] = data.get(i, j).unwrap_or(fill);
        }
    }
    Ok(out)
}
