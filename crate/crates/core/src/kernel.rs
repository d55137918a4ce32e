//! The probabilistic cluster kernel for incomplete data.
//!
//! An ensemble of mixture models, one per (initialisation `q`, order `g`)
//! pair, is fitted on random subsamples of the incomplete data. Each model's
//! posterior matrix `Γ` over *all* rows contributes `Γ Γᵀ`, and the kernel is
//! the average over the members that fitted successfully.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::gmm::{self, CovarianceKind, EmConfig};
use crate::seed;

/// Retries (with perturbed seeds) before a failing member is dropped.
pub const MEMBER_RETRIES: usize = 3;

/// A symmetric similarity matrix over the rows of a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    /// Wrap a square matrix, rejecting asymmetry beyond `1e-12` (relative
    /// to the largest entry). The stored matrix is exactly symmetric.
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!("kernel must be square, got {:?}", m.shape())));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Argument("kernel matrix is not symmetric".into()));
        }
        m.fill_lower_triangle_with_upper_triangle();
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.0.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::io("<csv>", std::io::Error::other(e.to_string())))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Little-endian binary: `N` as `u64`, then `N²` `f64` values row-major.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.size();
        let mut buf = Vec::with_capacity(8 + 8 * n * n);
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                buf.extend_from_slice(&self.0[(i, j)].to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::io("<kernel>", e))
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<kernel>", e))?;
        let bad = |message: String| Error::Format {
            path: "<kernel>".into(),
            message,
        };
        if bytes.len() < 8 {
            return Err(bad("missing size header".into()));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let expected = n
            .checked_mul(n)
            .and_then(|nn| nn.checked_mul(8))
            .and_then(|b| b.checked_add(8))
            .ok_or_else(|| bad(format!("size {n} overflows")))?;
        if bytes.len() != expected {
            return Err(bad(format!("expected {expected} bytes for N = {n}, found {}", bytes.len())));
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let at = 8 + 8 * (i * n + j);
            f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        });
        KernelMatrix::new(m)
    }
}

/// Ensemble settings. `initializations` is the number of restarts per
/// order; orders run over `2..=max_components`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    #[serde(alias = "q")]
    pub initializations: usize,
    #[serde(alias = "g")]
    pub max_components: usize,
    pub subsample_fraction: f64,
    pub em_iterations: usize,
    pub covariance_kind: CovarianceKind,
    pub variance_floor: f64,
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            initializations: 30,
            max_components: 30,
            subsample_fraction: 0.5,
            em_iterations: 10,
            covariance_kind: CovarianceKind::Diagonal,
            variance_floor: 1e-6,
            base_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initializations < 1 {
            return Err(Error::Argument("need at least one initialization".into()));
        }
        if self.max_components < 2 {
            return Err(Error::Argument("max_components must be at least 2".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        self.em_config().validate()
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            max_iterations: self.em_iterations,
            variance_floor: self.variance_floor,
            covariance_kind: self.covariance_kind,
            convergence_tol: 0.0,
        }
    }

    pub fn member_count(&self) -> usize {
        self.initializations * (self.max_components - 1)
    }
}

/// Kernel plus bookkeeping about the ensemble that produced it.
#[derive(Debug, Clone)]
pub struct PckidKernel {
    pub kernel: KernelMatrix,
    /// Members whose posteriors entered the average (the normaliser `Z`).
    pub members: usize,
    /// Members dropped after exhausting their retries.
    pub skipped: usize,
    /// Total retries spent across all members.
    pub retries: usize,
}

struct MemberOutcome {
    posterior: Option<DMatrix<f64>>,
    retries: usize,
}

fn fit_member(data: &IncompleteMatrix, order: usize, cfg: &EmConfig, fraction: f64, member_seed: u64) -> MemberOutcome {
    let n = data.nrows();
    let m = ((fraction * n as f64).round() as usize).clamp(1, n);
    for attempt in 0..=MEMBER_RETRIES {
        let s = if attempt == 0 {
            member_seed
        } else {
            seed::derive(member_seed, &[attempt as u64])
        };
        let mut rng = seed::rng(seed::derive(s, &[0]));
        let mut rows = index::sample(&mut rng, n, m).into_vec();
        rows.sort_unstable();
        let sub = data.select_rows(&rows);
        let result = gmm::fit(&sub, order, cfg, seed::derive(s, &[1]))
            .and_then(|fit| gmm::posterior(&fit.params, data));
        if let Ok(post) = result {
            let gamma = post.into_matrix();
            if gamma.iter().all(|v| v.is_finite()) {
                return MemberOutcome {
                    posterior: Some(gamma),
                    retries: attempt,
                };
            }
        }
    }
    MemberOutcome {
        posterior: None,
        retries: MEMBER_RETRIES,
    }
}

/// Build the PCKID kernel over all rows of `data`.
///
/// Member `(q, g)` trains a `g`-component mixture on its own subsample for
/// `em_iterations` rounds, then evaluates posteriors on every row. A member
/// that fails is retried with perturbed seeds and dropped after
/// [`MEMBER_RETRIES`] retries; the average runs over the survivors.
pub fn build_kernel(data: &IncompleteMatrix, config: &EnsembleConfig) -> Result<PckidKernel> {
    config.validate()?;
    if data.nrows() < 2 {
        return Err(Error::Argument("need at least two rows to build a kernel".into()));
    }
    let cfg = config.em_config();
    let members: Vec<(usize, usize)> = (1..=config.initializations)
        .flat_map(|q| (2..=config.max_components).map(move |g| (q, g)))
        .collect();
    let outcomes: Vec<MemberOutcome> = members
        .par_iter()
        .map(|&(q, g)| {
            let s = seed::derive(config.base_seed, &[q as u64, g as u64]);
            fit_member(data, g, &cfg, config.subsample_fraction, s)
        })
        .collect();

    let retries = outcomes.iter().map(|o| o.retries).sum();
    let posteriors: Vec<DMatrix<f64>> = outcomes.into_iter().filter_map(|o| o.posterior).collect();
    let skipped = members.len() - posteriors.len();
    if posteriors.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let kernel = combine_posteriors(&posteriors)?;
    Ok(PckidKernel {
        kernel,
        members: posteriors.len(),
        skipped,
        retries,
    })
}

/// `(1/M) Σ_m Γ_m Γ_mᵀ` over a list of `N x K_m` posterior matrices,
/// accumulated in list order.
pub fn combine_posteriors(posteriors: &[DMatrix<f64>]) -> Result<KernelMatrix> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::Argument("no posterior matrices to combine".into()))?;
    let n = first.nrows();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (m, gamma) in posteriors.iter().enumerate() {
        if gamma.nrows() != n {
            return Err(Error::Shape(format!(
                "posterior {m} has {} rows, expected {n}",
                gamma.nrows()
            )));
        }
        acc.gemm(1.0, gamma, &gamma.transpose(), 1.0);
    }
    acc /= posteriors.len() as f64;
    acc.fill_lower_triangle_with_upper_triangle();
    Ok(KernelMatrix(acc))
}
