//! Gaussian mixture models fitted directly to incomplete data.
//!
//! Each row contributes through the marginal of its observed coordinates.
//! The E-step also produces, per component, the conditional-mean
//! completion of every row; the M-step adds the conditional covariance of
//! the missing block to the scatter so that the update is exact EM under
//! MAR. Two covariance structures are supported: full matrices (Cholesky
//! solves per missingness pattern) and diagonal variance vectors
//! (elementwise updates).

mod em;
mod init;
mod params;
pub mod terms;

pub use em::{e_step, fit, fit_from, m_step, posterior, EStep, FitResult};
pub use init::init_params;
pub use params::{observed_moments, Covariance, GmmParams, GmmRecord, ObservedMoments};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Components whose total responsibility falls below this are degenerate.
pub const DEGENERATE_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Added to every covariance diagonal at init and after each M-step.
    pub variance_floor: f64,
    pub covariance_kind: CovarianceKind,
    /// Relative log-likelihood change that stops iteration; 0 disables.
    pub convergence_tol: f64,
}

impl Default for EmConfig {
    /// The ensemble setting: ten diagonal-covariance iterations, no early
    /// stop.
    fn default() -> Self {
        Self {
            max_iterations: 10,
            variance_floor: 1e-6,
            covariance_kind: CovarianceKind::Diagonal,
            convergence_tol: 0.0,
        }
    }
}

impl EmConfig {
    /// Settings for fitting one model to convergence.
    pub fn standalone(kind: CovarianceKind) -> Self {
        Self {
            max_iterations: 200,
            variance_floor: 1e-6,
            covariance_kind: kind,
            convergence_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Argument(format!(
                "variance_floor must be positive, got {}",
                self.variance_floor
            )));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::Argument("convergence_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Posterior component probabilities, one row per data point.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(DMatrix<f64>);

impl Responsibilities {
    pub fn new(gamma: DMatrix<f64>) -> Self {
        Self(gamma)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.0.ncols()
    }

    /// Column sums: effective number of points per component.
    pub fn component_mass(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.sum()).collect()
    }

    /// Index of the most probable component of each row.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.0
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &g)| {
                        if g > best.1 {
                            (k, g)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}
