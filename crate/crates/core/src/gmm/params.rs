use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::CovarianceKind;
use crate::dataset::observed_indices;
use crate::error::{Error, Result};

/// Covariance of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    /// Vector of per-dimension variances.
    Diagonal(DVector<f64>),
}

impl Covariance {
    pub fn kind(&self) -> CovarianceKind {
        match self {
            Covariance::Full(_) => CovarianceKind::Full,
            Covariance::Diagonal(_) => CovarianceKind::Diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Full(m) => m.nrows(),
            Covariance::Diagonal(v) => v.len(),
        }
    }

    /// Principal sub-block on the given coordinates.
    pub fn restrict(&self, idx: &[usize]) -> Covariance {
        match self {
            Covariance::Full(m) => Covariance::Full(m.select_rows(idx).select_columns(idx)),
            Covariance::Diagonal(v) => Covariance::Diagonal(v.select_rows(idx)),
        }
    }

    /// Dense form (a diagonal matrix for the diagonal variant).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diagonal(v) => DMatrix::from_diagonal(v),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Covariance::Full(m) => m.diagonal(),
            Covariance::Diagonal(v) => v.clone(),
        }
    }
}

/// Mixture weights, means (one row per component) and covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub weights: DVector<f64>,
    pub means: DMatrix<f64>,
    pub covariances: Vec<Covariance>,
}

impl GmmParams {
    pub fn new(weights: DVector<f64>, means: DMatrix<f64>, covariances: Vec<Covariance>) -> Result<Self> {
        let p = Self {
            weights,
            means,
            covariances,
        };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn kind(&self) -> CovarianceKind {
        self.covariances
            .first()
            .map_or(CovarianceKind::Diagonal, Covariance::kind)
    }

    pub fn mean(&self, k: usize) -> DVector<f64> {
        self.means.row(k).transpose()
    }

    fn check_shapes(&self) -> Result<()> {
        let k = self.weights.len();
        let d = self.means.ncols();
        if k == 0 {
            return Err(Error::Shape("a mixture needs at least one component".into()));
        }
        if self.means.nrows() != k || self.covariances.len() != k {
            return Err(Error::Shape(format!(
                "{k} weights but {} means and {} covariances",
                self.means.nrows(),
                self.covariances.len()
            )));
        }
        let kind = self.covariances[0].kind();
        for (c, cov) in self.covariances.iter().enumerate() {
            if cov.kind() != kind {
                return Err(Error::Shape("covariances mix full and diagonal forms".into()));
            }
            if cov.dim() != d {
                return Err(Error::Shape(format!(
                    "covariance {c} has dimension {}, means have {d}",
                    cov.dim()
                )));
            }
            if let Covariance::Full(m) = cov {
                if !m.is_square() {
                    return Err(Error::Shape(format!("covariance {c} is not square")));
                }
            }
        }
        Ok(())
    }

    /// Check the structural invariants: simplex weights and covariances at
    /// or above `floor` (diagonal entries / smallest eigenvalue).
    pub fn validate(&self, floor: f64) -> Result<()> {
        self.check_shapes()?;
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Argument("mixture weights are not on the simplex".into()));
        }
        let tol = 1e-9 * floor.max(1.0);
        for (c, cov) in self.covariances.iter().enumerate() {
            let min = match cov {
                Covariance::Diagonal(v) => v.min(),
                Covariance::Full(m) => {
                    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                        return Err(Error::Argument(format!("covariance {c} is not symmetric")));
                    }
                    m.clone().symmetric_eigenvalues().min()
                }
            };
            if !(min >= floor - tol) {
                return Err(Error::Argument(format!(
                    "covariance {c} has smallest eigenvalue {min:e} below the floor {floor:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_record(&self, seed: Option<u64>, iterations: Option<usize>) -> GmmRecord {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        let covariances = match self.kind() {
            CovarianceKind::Full => CovarianceRecord::Full(
                self.covariances
                    .iter()
                    .map(|c| rows(&c.to_dense()))
                    .collect(),
            ),
            CovarianceKind::Diagonal => CovarianceRecord::Diagonal(
                self.covariances
                    .iter()
                    .map(|c| c.diagonal().iter().copied().collect())
                    .collect(),
            ),
        };
        GmmRecord {
            kind: self.kind(),
            weights: self.weights.iter().copied().collect(),
            means: rows(&self.means),
            covariances,
            seed,
            iterations,
        }
    }

    pub fn from_record(record: &GmmRecord) -> Result<Self> {
        let k = record.weights.len();
        let d = record.means.first().map_or(0, Vec::len);
        if record.means.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged means".into()));
        }
        let means = DMatrix::from_fn(k.min(record.means.len()), d, |i, j| record.means[i][j]);
        let covariances = match (&record.covariances, record.kind) {
            (CovarianceRecord::Full(mats), CovarianceKind::Full) => mats
                .iter()
                .map(|m| {
                    if m.len() != d || m.iter().any(|r| r.len() != d) {
                        return Err(Error::Shape("covariance matrix has wrong shape".into()));
                    }
                    Ok(Covariance::Full(DMatrix::from_fn(d, d, |i, j| m[i][j])))
                })
                .collect::<Result<Vec<_>>>()?,
            (CovarianceRecord::Diagonal(vs), CovarianceKind::Diagonal) => vs
                .iter()
                .map(|v| Covariance::Diagonal(DVector::from_column_slice(v)))
                .collect(),
            _ => return Err(Error::Shape("covariance layout does not match `kind`".into())),
        };
        GmmParams::new(DVector::from_column_slice(&record.weights), means, covariances)
    }
}

/// JSON form of [`GmmParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmRecord {
    pub kind: CovarianceKind,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: CovarianceRecord,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
}

/// `K x d x d` nested arrays for full covariances, `K x d` for diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceRecord {
    Full(Vec<Vec<Vec<f64>>>),
    Diagonal(Vec<Vec<f64>>),
}

/// Mean and covariance of one component restricted to observed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMoments {
    pub mean: DVector<f64>,
    pub covariance: Covariance,
}

/// Observed-coordinate marginals of every component for one pattern.
pub fn observed_moments(params: &GmmParams, pattern: &[bool]) -> Vec<ObservedMoments> {
    let idx = observed_indices(pattern);
    (0..params.n_components())
        .map(|k| ObservedMoments {
            mean: params.mean(k).select_rows(&idx),
            covariance: params.covariances[k].restrict(&idx),
        })
        .collect()
}
