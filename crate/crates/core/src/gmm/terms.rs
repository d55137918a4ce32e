//! Per-row EM quantities written out term by term.
//!
//! `full_*` build the selection matrix `O` (identity with missing rows
//! deleted) and `S = Oᵀ (O Σ Oᵀ)⁻¹ O` explicitly. `diagonal_*` are the
//! elementwise equivalents for a variance vector `σ`, with `s = 1/σ` on
//! observed coordinates and `0` elsewhere. The EM code evaluates the same
//! quantities per pattern group (Cholesky solves on the full path, dense
//! column passes on the diagonal path) and is checked against these
//! reference forms in tests.
//!
//! `x` may hold anything at unobserved coordinates; those entries are
//! never read.

use nalgebra::{DMatrix, DVector};

use crate::dataset::observed_indices;
use crate::error::{Error, Result};

/// `O`: the identity with the rows of unobserved coordinates removed.
pub fn selection_matrix(pattern: &[bool]) -> DMatrix<f64> {
    let d = pattern.len();
    DMatrix::identity(d, d).select_rows(&observed_indices(pattern))
}

/// `S = Oᵀ (O Σ Oᵀ)⁻¹ O`.
pub fn s_matrix(sigma: &DMatrix<f64>, pattern: &[bool]) -> Result<DMatrix<f64>> {
    let o = selection_matrix(pattern);
    if o.nrows() == 0 {
        return Ok(DMatrix::zeros(pattern.len(), pattern.len()));
    }
    let sigma_o = &o * sigma * o.transpose();
    let inv = sigma_o.try_inverse().ok_or_else(|| Error::Numerical {
        component: 0,
        pattern: crate::dataset::pattern_string(pattern),
    })?;
    Ok(o.transpose() * inv * o)
}

/// `x - μ` with unobserved coordinates zeroed.
fn observed_residual(x: &DVector<f64>, mu: &DVector<f64>, pattern: &[bool]) -> DVector<f64> {
    DVector::from_fn(mu.len(), |j, _| if pattern[j] { x[j] - mu[j] } else { 0.0 })
}

/// `Ŷ = μ + Σ S (x − μ)`.
pub fn full_completion(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    pattern: &[bool],
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = s_matrix(sigma, pattern)?;
    Ok(mu + sigma * s * observed_residual(x, mu, pattern))
}

/// `Ω = γ ((Ŷ − μ')(Ŷ − μ')ᵀ + (I − Σ S) Σ)` with `μ'` the updated mean.
pub fn full_omega(
    gamma: f64,
    completion: &DVector<f64>,
    new_mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    pattern: &[bool],
) -> Result<DMatrix<f64>> {
    let d = new_mean.len();
    let s = s_matrix(sigma, pattern)?;
    let r = completion - new_mean;
    let correction = (DMatrix::identity(d, d) - sigma * s) * sigma;
    Ok((&r * r.transpose() + correction) * gamma)
}

/// `s`: reciprocal variances on observed coordinates, zero elsewhere.
pub fn s_vector(variances: &DVector<f64>, pattern: &[bool]) -> DVector<f64> {
    DVector::from_fn(variances.len(), |j, _| {
        if pattern[j] {
            1.0 / variances[j]
        } else {
            0.0
        }
    })
}

/// `ŷ = μ + σ ⊙ s ⊙ (x − μ)`.
pub fn diagonal_completion(
    mu: &DVector<f64>,
    variances: &DVector<f64>,
    pattern: &[bool],
    x: &DVector<f64>,
) -> DVector<f64> {
    let s = s_vector(variances, pattern);
    let r = observed_residual(x, mu, pattern);
    mu + variances.component_mul(&s).component_mul(&r)
}

/// `ω = γ ((ŷ − μ') ⊙ (ŷ − μ') + σ − σ ⊙ s ⊙ σ)` with `μ'` the updated mean.
pub fn diagonal_omega(
    gamma: f64,
    completion: &DVector<f64>,
    new_mean: &DVector<f64>,
    variances: &DVector<f64>,
    pattern: &[bool],
) -> DVector<f64> {
    let s = s_vector(variances, pattern);
    let r = completion - new_mean;
    (r.component_mul(&r) + variances - variances.component_mul(&s).component_mul(variances)) * gamma
}
