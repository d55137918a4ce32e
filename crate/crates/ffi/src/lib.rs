//! C ABI over the pckid library.
//!
//! Every fallible function returns a [`PckidStatus`]; on failure the message
//! is available from [`pckid_last_error_message`] on the same thread until
//! the next call. Objects are opaque handles created by `*_new`/`*_build`
//! and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use pckid::dataset::{load_csv_with, CsvOptions};
use pckid::gmm::CovarianceKind;
use pckid::kernel::{build_kernel, EnsembleConfig, KernelMatrix};
use pckid::{Error, IncompleteMatrix};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PckidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Parse = 4,
    Io = 5,
    Numerical = 6,
    EmptyEnsemble = 7,
    Panic = 8,
    Other = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PckidCovariance {
    Diagonal = 0,
    Full = 1,
}

/// Ensemble settings; fill with [`pckid_ensemble_config_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PckidEnsembleConfig {
    /// Initializations per mixture order.
    pub initializations: usize,
    /// Largest mixture order; orders run from 2.
    pub max_components: usize,
    pub subsample_fraction: f64,
    pub em_iterations: usize,
    pub covariance: PckidCovariance,
    pub variance_floor: f64,
    pub seed: u64,
}

/// Data matrix with missing entries.
pub struct PckidMatrix(IncompleteMatrix);

/// Symmetric PSD kernel matrix together with ensemble statistics.
pub struct PckidKernel {
    kernel: KernelMatrix,
    members: usize,
    skipped: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PckidStatus {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::UnsupportedMethod(_) => PckidStatus::InvalidArgument,
        Error::Shape(_) | Error::EmptyDimension { .. } | Error::NoDimensionsLeft => PckidStatus::Shape,
        Error::Parse { .. } | Error::Format { .. } => PckidStatus::Parse,
        Error::Io { .. } => PckidStatus::Io,
        Error::Numerical { .. } | Error::DegenerateComponent { .. } | Error::DegenerateKernel(_) => {
            PckidStatus::Numerical
        }
        Error::Em { source, .. } | Error::Experiment { source, .. } => status_of(source),
        Error::EmptyEnsemble => PckidStatus::EmptyEnsemble,
        #[allow(unreachable_patterns)]
        _ => PckidStatus::Other,
    }
}

struct Fail(PckidStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PckidStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PckidStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PckidStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PckidStatus::Panic
        }
    }
}

unsafe fn view<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn view_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pckid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pckid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a matrix from `rows * cols` row-major values. `observed` holds one
/// byte per cell (non-zero = observed); when NULL, NaN cells are missing.
///
/// # Safety
/// `values` (and `observed` when given) must point to `rows * cols` elements;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pckid_matrix_new(
    values: *const f64,
    observed: *const u8,
    rows: usize,
    cols: usize,
    out: *mut *mut PckidMatrix,
) -> PckidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(PckidStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let v = view(values, len, "values")?;
        let mask: Vec<bool> = if observed.is_null() {
            v.iter().map(|x| !x.is_nan()).collect()
        } else {
            view(observed, len, "observed")?.iter().map(|&m| m != 0).collect()
        };
        if let Some(i) = (0..len).find(|&i| mask[i] && !v[i].is_finite()) {
            return Err(Fail(
                PckidStatus::InvalidArgument,
                format!("observed cell ({}, {}) is not finite", i / cols, i % cols),
            ));
        }
        let data = IncompleteMatrix::new(
            DMatrix::from_row_slice(rows, cols, v),
            DMatrix::from_row_slice(rows, cols, &mask),
        )?;
        *out = Box::into_raw(Box::new(PckidMatrix(data)));
        Ok(())
    })
}

/// Read a numeric CSV without header; empty cells and `missing_token`
/// (NULL for "NaN") are missing.
///
/// # Safety
/// `path` and `missing_token` must be NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pckid_matrix_from_csv(
    path: *const c_char,
    missing_token: *const c_char,
    out: *mut *mut PckidMatrix,
) -> PckidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if path.is_null() {
            return Err(null("path"));
        }
        let text = |p: *const c_char| {
            CStr::from_ptr(p)
                .to_str()
                .map(str::to_owned)
                .map_err(|_| Fail(PckidStatus::InvalidArgument, "string is not UTF-8".into()))
        };
        let options = CsvOptions {
            missing_token: if missing_token.is_null() { "NaN".into() } else { text(missing_token)? },
            has_header: false,
        };
        let data = load_csv_with(text(path)?, &options)?;
        *out = Box::into_raw(Box::new(PckidMatrix(data)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pckid_matrix_free(m: *mut PckidMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live matrix handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pckid_matrix_rows(m: *const PckidMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.nrows())
}

/// # Safety
/// `m` must be a live matrix handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pckid_matrix_cols(m: *const PckidMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.ncols())
}

/// Library defaults: Q = G = 30, half-size subsamples, 10 EM iterations,
/// diagonal covariances, floor 1e-6, seed 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pckid_ensemble_config_default(out: *mut PckidEnsembleConfig) -> PckidStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = EnsembleConfig::default();
        *out = PckidEnsembleConfig {
            initializations: d.initializations,
            max_components: d.max_components,
            subsample_fraction: d.subsample_fraction,
            em_iterations: d.em_iterations,
            covariance: PckidCovariance::Diagonal,
            variance_floor: d.variance_floor,
            seed: d.base_seed,
        };
        Ok(())
    })
}

/// Build the ensemble kernel of `data`.
///
/// # Safety
/// `data` and `config` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_build(
    data: *const PckidMatrix,
    config: *const PckidEnsembleConfig,
    out: *mut *mut PckidKernel,
) -> PckidStatus {
    guard(|| {
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = EnsembleConfig {
            initializations: c.initializations,
            max_components: c.max_components,
            subsample_fraction: c.subsample_fraction,
            em_iterations: c.em_iterations,
            covariance_kind: match c.covariance {
                PckidCovariance::Diagonal => CovarianceKind::Diagonal,
                PckidCovariance::Full => CovarianceKind::Full,
            },
            variance_floor: c.variance_floor,
            base_seed: c.seed,
        };
        let pk = build_kernel(&data.0, &config)?;
        *out = Box::into_raw(Box::new(PckidKernel {
            kernel: pk.kernel,
            members: pk.members,
            skipped: pk.skipped,
        }));
        Ok(())
    })
}

/// Wrap a caller-supplied `n * n` row-major symmetric PSD matrix.
///
/// # Safety
/// `values` must point to `n * n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_from_values(
    values: *const f64,
    n: usize,
    out: *mut *mut PckidKernel,
) -> PckidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Fail(PckidStatus::InvalidArgument, "n * n overflows".into()))?;
        let kernel = KernelMatrix::new(DMatrix::from_row_slice(n, n, view(values, len, "values")?))?;
        *out = Box::into_raw(Box::new(PckidKernel {
            kernel,
            members: 0,
            skipped: 0,
        }));
        Ok(())
    })
}

/// # Safety
/// `k` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_free(k: *mut PckidKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// # Safety
/// `k` must be a live kernel handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_size(k: *const PckidKernel) -> usize {
    k.as_ref().map_or(0, |k| k.kernel.size())
}

/// Ensemble members that entered the average (0 for wrapped matrices).
///
/// # Safety
/// `k` must be a live kernel handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_members(k: *const PckidKernel) -> usize {
    k.as_ref().map_or(0, |k| k.members)
}

/// Ensemble members dropped after exhausting their retries.
///
/// # Safety
/// `k` must be a live kernel handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_skipped(k: *const PckidKernel) -> usize {
    k.as_ref().map_or(0, |k| k.skipped)
}

/// Copy the kernel into `out` (row-major, `len` must equal size * size).
///
/// # Safety
/// `k` must be valid; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pckid_kernel_copy(k: *const PckidKernel, out: *mut f64, len: usize) -> PckidStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("kernel"))?;
        let n = k.kernel.size();
        if len != n * n {
            return Err(Fail(PckidStatus::Shape, format!("buffer holds {len} values, kernel has {}", n * n)));
        }
        let out = view_mut(out, len, "out")?;
        let m = k.kernel.matrix();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Spectral clustering: kernel PCA to `k` dimensions, then k-means with
/// `restarts` restarts. Writes one label in `0..k` per point.
///
/// # Safety
/// `kernel` must be valid; `labels` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn pckid_spectral_cluster(
    kernel: *const PckidKernel,
    k: usize,
    restarts: usize,
    seed: u64,
    labels: *mut usize,
    len: usize,
) -> PckidStatus {
    guard(|| {
        let kernel = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        if len != kernel.kernel.size() {
            return Err(Fail(
                PckidStatus::Shape,
                format!("label buffer holds {len}, kernel has {} points", kernel.kernel.size()),
            ));
        }
        let out = view_mut(labels, len, "labels")?;
        let pred = pckid::spectral::spectral_cluster(&kernel.kernel, k, restarts, seed)?;
        out.copy_from_slice(&pred);
        Ok(())
    })
}

/// Clustering accuracy under the best one-to-one label matching.
///
/// # Safety
/// `truth` and `predicted` must point to `n` labels; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pckid_accuracy(
    truth: *const usize,
    predicted: *const usize,
    n: usize,
    out: *mut f64,
) -> PckidStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let t = view(truth, n, "truth")?;
        let p = view(predicted, n, "predicted")?;
        *out = pckid::evaluation::clustering_accuracy(t, p)?;
        Ok(())
    })
}
