use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::params::{Covariance, GmmParams};
use super::{CovarianceKind, EmConfig, Responsibilities, DEGENERATE_MASS};
use crate::dataset::{group_by_pattern, pattern_string, IncompleteMatrix, PatternGroup};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Output of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub responsibilities: Responsibilities,
    /// Per component, an `N x d` matrix whose row `i` is the conditional
    /// expectation of row `i` given its observed coordinates.
    pub completions: Vec<DMatrix<f64>>,
    /// `Σ_i log Σ_k π_k N(x_i^o | μ_k^o, Σ_k^o)`.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: GmmParams,
    /// Posteriors of the training rows under the final parameters.
    pub responsibilities: Responsibilities,
    /// Log-likelihood of the parameters entering each E-step, followed by
    /// that of the final parameters.
    pub log_likelihood_trace: Vec<f64>,
    /// Number of completed E/M rounds.
    pub iterations: usize,
}

fn check_dims(data: &IncompleteMatrix, params: &GmmParams) -> Result<()> {
    if data.ncols() != params.dim() {
        return Err(Error::Shape(format!(
            "data has {} columns, model has dimension {}",
            data.ncols(),
            params.dim()
        )));
    }
    Ok(())
}

fn numerical(k: usize, pattern: &[bool]) -> Error {
    Error::Numerical {
        component: k,
        pattern: pattern_string(pattern),
    }
}

fn cholesky(m: DMatrix<f64>, k: usize, pattern: &[bool]) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(numerical(k, pattern));
    }
    Cholesky::new(m).ok_or_else(|| numerical(k, pattern))
}

/// Observed block of a pattern group, column-major (`rows.len()` per column).
fn gather(values: &DMatrix<f64>, rows: &[usize], obs: &[usize]) -> Vec<f64> {
    let n = values.nrows();
    let mut out = Vec::with_capacity(rows.len() * obs.len());
    for &j in obs {
        let col = &values.as_slice()[j * n..(j + 1) * n];
        out.extend(rows.iter().map(|&i| col[i]));
    }
    out
}

/// Log observed-marginal densities (`N x K`), optionally with completions.
fn evaluate(
    data: &IncompleteMatrix,
    groups: &[PatternGroup],
    params: &GmmParams,
    with_completions: bool,
) -> Result<EStep> {
    check_dims(data, params)?;
    let n = data.nrows();
    let d = data.ncols();
    let kc = params.n_components();
    let values = data.values();
    let mut log_joint = DMatrix::zeros(n, kc);
    let mut completions = if with_completions {
        vec![DMatrix::zeros(n, d); kc]
    } else {
        Vec::new()
    };

    for group in groups {
        let obs = group.observed();
        let miss = group.missing();
        let pattern = &group.pattern;
        let mut gathered: Option<Vec<f64>> = None;
        for k in 0..kc {
            let mu = params.mean(k);
            let log_w = params.weights[k].ln();
            match &params.covariances[k] {
                Covariance::Full(sigma) => {
                    if obs.is_empty() {
                        for &i in &group.row_indices {
                            log_joint[(i, k)] = log_w;
                            if with_completions {
                                completions[k].set_row(i, &mu.transpose());
                            }
                        }
                        continue;
                    }
                    let sigma_oo = sigma.select_rows(&obs).select_columns(&obs);
                    let chol = cholesky(sigma_oo, k, pattern)?;
                    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    let sigma_mo = sigma.select_rows(&miss).select_columns(&obs);
                    let mu_o = mu.select_rows(&obs);
                    for &i in &group.row_indices {
                        let r = DVector::from_fn(obs.len(), |a, _| values[(i, obs[a])] - mu_o[a]);
                        let w = chol.solve(&r);
                        let maha = r.dot(&w);
                        log_joint[(i, k)] = log_w - 0.5 * (obs.len() as f64 * LN_2PI + log_det + maha);
                        if with_completions {
                            let row = &mut completions[k];
                            for &j in &obs {
                                row[(i, j)] = values[(i, j)];
                            }
                            let fill = &sigma_mo * &w;
                            for (a, &j) in miss.iter().enumerate() {
                                row[(i, j)] = mu[j] + fill[a];
                            }
                        }
                    }
                }
                Covariance::Diagonal(var) => {
                    let mut log_det = 0.0;
                    for &j in &obs {
                        if !(var[j] > 0.0 && var[j].is_finite()) {
                            return Err(numerical(k, pattern));
                        }
                        log_det += var[j].ln();
                    }
                    let rows = &group.row_indices;
                    let block = gathered.get_or_insert_with(|| gather(values, rows, &obs));
                    let mut maha = vec![0.0; rows.len()];
                    for (a, &j) in obs.iter().enumerate() {
                        let (m, inv) = (mu[j], 1.0 / var[j]);
                        let xs = &block[a * rows.len()..(a + 1) * rows.len()];
                        for (acc, &x) in maha.iter_mut().zip(xs) {
                            let r = x - m;
                            *acc += r * r * inv;
                        }
                    }
                    let constant = log_w - 0.5 * (obs.len() as f64 * LN_2PI + log_det);
                    for (&i, &m) in rows.iter().zip(&maha) {
                        log_joint[(i, k)] = constant - 0.5 * m;
                    }
                    if with_completions {
                        // Observed coordinates are kept, missing ones take μ.
                        let target = completions[k].as_mut_slice();
                        for &j in &obs {
                            let col = &values.as_slice()[j * n..(j + 1) * n];
                            let out = &mut target[j * n..(j + 1) * n];
                            for &i in rows {
                                out[i] = col[i];
                            }
                        }
                        for &j in &miss {
                            let out = &mut target[j * n..(j + 1) * n];
                            for &i in rows {
                                out[i] = mu[j];
                            }
                        }
                    }
                }
            }
        }
    }

    let (gamma, log_likelihood) = normalize(data, log_joint)?;
    Ok(EStep {
        responsibilities: Responsibilities::new(gamma),
        completions,
        log_likelihood,
    })
}

/// Row-wise softmax of log joint densities, plus the log-likelihood.
fn normalize(data: &IncompleteMatrix, log_joint: DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let mut gamma = log_joint;
    let mut log_likelihood = 0.0;
    for i in 0..gamma.nrows() {
        let mut row = gamma.row_mut(i);
        let m = row.max();
        if !m.is_finite() {
            let k = row.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(numerical(k, &data.row_pattern(i)));
        }
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
        log_likelihood += m + s.ln();
    }
    Ok((gamma, log_likelihood))
}

/// `Σ_i f(x_i, m_i, g_i)` over three equal-length slices, with four
/// interleaved partial sums so the loop vectorises; the summation order is
/// fixed, so results are reproducible.
fn fold_lanes<const R: usize>(xs: &[f64], ms: &[f64], g: &[f64], f: impl Fn(f64, f64, f64) -> [f64; R]) -> [f64; R] {
    let mut lanes = [[0.0; R]; 4];
    let chunks = xs.chunks_exact(4).zip(ms.chunks_exact(4)).zip(g.chunks_exact(4));
    for ((xc, mc), gc) in chunks {
        for l in 0..4 {
            let v = f(xc[l], mc[l], gc[l]);
            for r in 0..R {
                lanes[l][r] += v[r];
            }
        }
    }
    let mut out = [0.0; R];
    for r in 0..R {
        out[r] = (lanes[0][r] + lanes[1][r]) + (lanes[2][r] + lanes[3][r]);
    }
    let tail = xs.len() / 4 * 4;
    for i in tail..xs.len() {
        let v = f(xs[i], ms[i], g[i]);
        for r in 0..R {
            out[r] += v[r];
        }
    }
    out
}

/// Dense copies of the data for diagonal-covariance EM: every pass runs
/// over contiguous columns with the mask applied arithmetically.
struct DiagonalData {
    n: usize,
    d: usize,
    /// Column-major values with missing cells set to zero.
    x: Vec<f64>,
    /// Column-major mask, 1 observed and 0 missing.
    m: Vec<f64>,
    observed_per_row: Vec<f64>,
}

impl DiagonalData {
    fn new(data: &IncompleteMatrix) -> Self {
        let (n, d) = (data.nrows(), data.ncols());
        let mask = data.mask().as_slice();
        let m: Vec<f64> = mask.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        let x = data
            .values()
            .as_slice()
            .iter()
            .zip(mask)
            .map(|(&v, &o)| if o { v } else { 0.0 })
            .collect();
        let observed_per_row = (0..n).map(|i| data.mask().row(i).iter().filter(|&&o| o).count() as f64).collect();
        Self {
            n,
            d,
            x,
            m,
            observed_per_row,
        }
    }

    fn column(&self, j: usize) -> (&[f64], &[f64]) {
        let r = j * self.n..(j + 1) * self.n;
        (&self.x[r.clone()], &self.m[r])
    }

    fn log_joint(&self, data: &IncompleteMatrix, params: &GmmParams) -> Result<DMatrix<f64>> {
        check_dims(data, params)?;
        let n = self.n;
        let mut out = DMatrix::zeros(n, params.n_components());
        let mut maha = vec![0.0; n];
        let mut log_det = vec![0.0; n];
        for (k, cov) in params.covariances.iter().enumerate() {
            let Covariance::Diagonal(var) = cov else {
                return Err(Error::Shape("mixed covariance kinds".into()));
            };
            maha.fill(0.0);
            log_det.fill(0.0);
            for j in 0..self.d {
                let (xs, ms) = self.column(j);
                let v = var[j];
                if !(v > 0.0 && v.is_finite()) {
                    let i = ms.iter().position(|&o| o == 1.0).unwrap_or(0);
                    return Err(numerical(k, &data.row_pattern(i)));
                }
                let (mu, inv, lv) = (params.means[(k, j)], 1.0 / v, v.ln());
                for (((a, b), &x), &o) in maha.iter_mut().zip(log_det.iter_mut()).zip(xs).zip(ms) {
                    let r = x - mu;
                    *a += o * (r * r * inv);
                    *b += o * lv;
                }
            }
            let log_w = params.weights[k].ln();
            let col = &mut out.as_mut_slice()[k * n..(k + 1) * n];
            for i in 0..n {
                col[i] = log_w - 0.5 * (self.observed_per_row[i] * LN_2PI + log_det[i] + maha[i]);
            }
        }
        Ok(out)
    }

    /// Same update as [`m_step`] for diagonal covariances, with completions
    /// formed on the fly (`x` where observed, `μ` elsewhere).
    fn m_step(&self, gamma: &DMatrix<f64>, prev: &GmmParams, variance_floor: f64) -> Result<GmmParams> {
        let (n, d) = (self.n, self.d);
        let kc = prev.n_components();
        let mut weights = DVector::zeros(kc);
        let mut means = DMatrix::zeros(kc, d);
        let mut covariances = Vec::with_capacity(kc);
        for k in 0..kc {
            let g = &gamma.as_slice()[k * n..(k + 1) * n];
            let nk: f64 = g.iter().sum();
            if !(nk >= DEGENERATE_MASS) {
                return Err(Error::DegenerateComponent { component: k, mass: nk });
            }
            weights[k] = nk / n as f64;
            let Covariance::Diagonal(var) = &prev.covariances[k] else {
                return Err(Error::Shape("mixed covariance kinds".into()));
            };
            let mut cov = DVector::zeros(d);
            for j in 0..d {
                let (xs, ms) = self.column(j);
                let (mu, v) = (prev.means[(k, j)], var[j]);
                // Observed part accumulated directly, missing part through
                // its total weight: ŷ is μ there.
                let [sum_x, weight_obs] = fold_lanes(xs, ms, g, |x, o, w| [w * o * x, w * o]);
                let weight_miss = nk - weight_obs;
                let mu_new = (sum_x + mu * weight_miss) / nk;
                let [scatter] = fold_lanes(xs, ms, g, |x, o, w| [w * o * (x - mu_new) * (x - mu_new)]);
                let shift = mu - mu_new;
                means[(k, j)] = mu_new;
                cov[j] = (scatter + weight_miss * (shift * shift + v)) / nk + variance_floor;
            }
            covariances.push(Covariance::Diagonal(cov));
        }
        GmmParams::new(weights, means, covariances)
    }
}

/// E-step: posteriors, per-component completions and the observed-data
/// log-likelihood under `params`.
pub fn e_step(data: &IncompleteMatrix, params: &GmmParams) -> Result<EStep> {
    evaluate(data, &group_by_pattern(data), params, true)
}

/// Posterior component probabilities of every row of `data`. Rows with no
/// observed coordinate get the mixture weights.
pub fn posterior(params: &GmmParams, data: &IncompleteMatrix) -> Result<Responsibilities> {
    if params.kind() == CovarianceKind::Diagonal {
        let dense = DiagonalData::new(data);
        let (gamma, _) = normalize(data, dense.log_joint(data, params)?)?;
        return Ok(Responsibilities::new(gamma));
    }
    Ok(evaluate(data, &group_by_pattern(data), params, false)?.responsibilities)
}

/// M-step: next parameters from an E-step computed under `prev`.
pub fn m_step(
    data: &IncompleteMatrix,
    estep: &EStep,
    prev: &GmmParams,
    variance_floor: f64,
) -> Result<GmmParams> {
    m_step_grouped(data, &group_by_pattern(data), estep, prev, variance_floor)
}

fn m_step_grouped(
    data: &IncompleteMatrix,
    groups: &[PatternGroup],
    estep: &EStep,
    prev: &GmmParams,
    variance_floor: f64,
) -> Result<GmmParams> {
    check_dims(data, prev)?;
    let n = data.nrows();
    let d = data.ncols();
    let kc = prev.n_components();
    let gamma = estep.responsibilities.matrix();
    if gamma.shape() != (n, kc) || estep.completions.len() != kc {
        return Err(Error::Shape("E-step output does not match data and model".into()));
    }

    let mass = estep.responsibilities.component_mass();
    let mut weights = DVector::zeros(kc);
    let mut means = DMatrix::zeros(kc, d);
    let mut covariances = Vec::with_capacity(kc);

    for k in 0..kc {
        let nk = mass[k];
        if !(nk >= DEGENERATE_MASS) {
            return Err(Error::DegenerateComponent { component: k, mass: nk });
        }
        weights[k] = nk / n as f64;
        let y = &estep.completions[k];
        let g = gamma.column(k);
        let mu_new: DVector<f64> = y.tr_mul(&g) / nk;
        means.set_row(k, &mu_new.transpose());

        let cov = match &prev.covariances[k] {
            Covariance::Full(sigma) => {
                let mut centered = y.clone();
                for i in 0..n {
                    let gi = g[i];
                    for j in 0..d {
                        centered[(i, j)] = (centered[(i, j)] - mu_new[j]) * gi.sqrt();
                    }
                }
                let mut scatter = centered.tr_mul(&centered);
                // Conditional covariance of the missing block, shared by
                // every row of a pattern group.
                for group in groups {
                    let obs = group.observed();
                    if obs.len() == d {
                        continue;
                    }
                    let weight: f64 = group.row_indices.iter().map(|&i| g[i]).sum();
                    if weight == 0.0 {
                        continue;
                    }
                    let correction = if obs.is_empty() {
                        sigma.clone()
                    } else {
                        let chol = cholesky(sigma.select_rows(&obs).select_columns(&obs), k, &group.pattern)?;
                        let sigma_ao = sigma.select_columns(&obs);
                        let solved = chol.solve(&sigma_ao.transpose());
                        sigma - &sigma_ao * solved
                    };
                    scatter += correction * weight;
                }
                let mut cov = scatter / nk;
                cov = (&cov + cov.transpose()) * 0.5;
                for j in 0..d {
                    cov[(j, j)] += variance_floor;
                }
                Covariance::Full(cov)
            }
            Covariance::Diagonal(var) => {
                // Σ_i γ_i (ŷ_i − μ')², column by column.
                let mut acc = DVector::zeros(d);
                let gs = &gamma.as_slice()[k * n..(k + 1) * n];
                for (j, col) in y.as_slice().chunks_exact(n).enumerate() {
                    let m = mu_new[j];
                    acc[j] = col.iter().zip(gs).map(|(&v, &gi)| gi * (v - m) * (v - m)).sum::<f64>();
                }
                // Plus Σ_i γ_i (σ − σ ⊙ s_i ⊙ σ): zero on observed
                // coordinates, σ on missing ones.
                for i in 0..n {
                    for j in 0..d {
                        if !data.is_observed(i, j) {
                            acc[j] += g[i] * var[j];
                        }
                    }
                }
                let mut cov = acc / nk;
                cov.add_scalar_mut(variance_floor);
                Covariance::Diagonal(cov)
            }
        };
        covariances.push(cov);
    }
    GmmParams::new(weights, means, covariances)
}

/// Fit a `k`-component mixture with EM, starting from [`init_params`].
///
/// [`init_params`]: super::init_params
pub fn fit(data: &IncompleteMatrix, k: usize, config: &EmConfig, seed: u64) -> Result<FitResult> {
    config.validate()?;
    let init = super::init_params(data, k, config, seed)?;
    fit_from(data, init, config)
}

/// Run EM from the given parameters.
pub fn fit_from(data: &IncompleteMatrix, init: GmmParams, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    let engine = if init.kind() == CovarianceKind::Diagonal {
        Engine::Diagonal(DiagonalData::new(data))
    } else {
        Engine::Grouped(group_by_pattern(data))
    };
    let mut params = init;
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    let mut iterations = 0;
    for it in 0..config.max_iterations {
        let wrap = |e: Error| Error::Em {
            iteration: it,
            source: Box::new(e),
        };
        let estep = engine.e_step(data, &params, true).map_err(wrap)?;
        if config.convergence_tol > 0.0 {
            if let Some(&prev) = trace.last() {
                let prev: f64 = prev;
                let change = (estep.log_likelihood - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                if change < config.convergence_tol {
                    trace.push(estep.log_likelihood);
                    return Ok(FitResult {
                        params,
                        responsibilities: estep.responsibilities,
                        log_likelihood_trace: trace,
                        iterations,
                    });
                }
            }
        }
        trace.push(estep.log_likelihood);
        params = engine.m_step(data, &estep, &params, config.variance_floor).map_err(wrap)?;
        iterations += 1;
    }
    let final_eval = engine.e_step(data, &params, false).map_err(|e| Error::Em {
        iteration: iterations,
        source: Box::new(e),
    })?;
    trace.push(final_eval.log_likelihood);
    Ok(FitResult {
        params,
        responsibilities: final_eval.responsibilities,
        log_likelihood_trace: trace,
        iterations,
    })
}

enum Engine {
    Grouped(Vec<PatternGroup>),
    Diagonal(DiagonalData),
}

impl Engine {
    fn e_step(&self, data: &IncompleteMatrix, params: &GmmParams, with_completions: bool) -> Result<EStep> {
        match self {
            Engine::Grouped(groups) => evaluate(data, groups, params, with_completions),
            Engine::Diagonal(dense) => {
                let (gamma, log_likelihood) = normalize(data, dense.log_joint(data, params)?)?;
                Ok(EStep {
                    responsibilities: Responsibilities::new(gamma),
                    completions: Vec::new(),
                    log_likelihood,
                })
            }
        }
    }

    fn m_step(&self, data: &IncompleteMatrix, estep: &EStep, prev: &GmmParams, floor: f64) -> Result<GmmParams> {
        match self {
            Engine::Grouped(groups) => m_step_grouped(data, groups, estep, prev, floor),
            Engine::Diagonal(dense) => dense.m_step(estep.responsibilities.matrix(), prev, floor),
        }
    }
}
