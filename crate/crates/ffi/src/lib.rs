//! C ABI for omics-bnp.
//!
//! Fallible functions return an [`OmbStatus`]. After a failure the message is
//! available from [`omb_last_error`] on the calling thread. Objects are opaque
//! and released with their `_free` function. Matrices are row-major and
//! cluster labels crossing the boundary are one-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use omics_bnp::mcmc::{run_stage1, McmcConfig, Stage1Result};
use omics_bnp::model::{transform_platform, Matrix, PlatformMatrix, Transform, TransformedDataset};
use omics_bnp::partition::{pdp_predictive, PartitionCounts};
use omics_bnp::selection::fdr_select;
use omics_bnp::simulation::pair_agreement;
use omics_bnp::Error;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Structural = 4,
    Parse = 5,
    Constraint = 6,
    Config = 7,
    Io = 8,
    /// An output buffer has the wrong length.
    BufferSize = 9,
    /// The library panicked; the message names the cause.
    Panic = 10,
}

/// Input transform for a platform.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmbTransform {
    Identity = 0,
    Logit = 1,
}

/// Platforms under construction. Every platform must have the same patients
/// in the same order.
pub struct OmbDataset {
    platforms: Vec<Matrix>,
}

/// A completed Stage 1 fit.
pub struct OmbFit {
    n: usize,
    probes: Vec<usize>,
    result: Stage1Result,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(OmbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Domain { .. } => OmbStatus::Domain,
            Error::Argument(_) => OmbStatus::InvalidArgument,
            Error::Structural(_) => OmbStatus::Structural,
            Error::Parse { .. } => OmbStatus::Parse,
            Error::Constraint(_) => OmbStatus::Constraint,
            Error::Config(_) => OmbStatus::Config,
            Error::Io { .. } => OmbStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OmbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OmbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            OmbStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(OmbStatus::NullPointer, format!("{what} is null"))
}

fn argument(msg: String) -> Failure {
    Failure(OmbStatus::InvalidArgument, msg)
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len != need {
        return Err(Failure(
            OmbStatus::BufferSize,
            format!("{what} holds {len} values, need {need}"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or point to a live object of type `T`.
unsafe fn object<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or valid for one write.
unsafe fn store<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn platform(fit: &OmbFit, t: usize) -> Result<usize, Failure> {
    if t < fit.probes.len() {
        Ok(t)
    } else {
        Err(argument(format!("platform {t} out of range for {} platforms", fit.probes.len())))
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn omb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn omb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New empty dataset. Release with [`omb_dataset_free`].
#[no_mangle]
pub extern "C" fn omb_dataset_new() -> *mut OmbDataset {
    Box::into_raw(Box::new(OmbDataset { platforms: Vec::new() }))
}

/// # Safety
/// `dataset` must be null or a pointer from [`omb_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omb_dataset_free(dataset: *mut OmbDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Append a platform of `n` patients by `p` probes, copied from `values`.
///
/// # Safety
/// `dataset` must be a live dataset and `values` must point to `n * p`
/// readable doubles.
#[no_mangle]
pub unsafe extern "C" fn omb_dataset_add_platform(
    dataset: *mut OmbDataset,
    values: *const f64,
    n: usize,
    p: usize,
    transform: OmbTransform,
) -> OmbStatus {
    guard(|| {
        let ds = dataset.as_mut().ok_or_else(|| null("dataset"))?;
        let len = n
            .checked_mul(p)
            .ok_or_else(|| argument(format!("{n} x {p} overflows")))?;
        if n == 0 || p == 0 {
            return Err(argument("platform must have patients and probes".into()));
        }
        if let Some(first) = ds.platforms.first() {
            if first.rows() != n {
                return Err(Failure(
                    OmbStatus::Structural,
                    format!("platform has {n} patients, expected {}", first.rows()),
                ));
            }
        }
        let raw = Matrix::new(n, p, input(values, len, "values")?.to_vec())?;
        let kind = match transform {
            OmbTransform::Identity => Transform::Identity,
            OmbTransform::Logit => Transform::Logit,
        };
        ds.platforms.push(transform_platform(&raw, kind)?);
        Ok(())
    })
}

/// Number of platforms added so far.
///
/// # Safety
/// `dataset` must be null or a live dataset.
#[no_mangle]
pub unsafe extern "C" fn omb_dataset_n_platforms(dataset: *const OmbDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.platforms.len())
}

/// Run Stage 1 on `dataset`. `config_toml` holds MCMC settings in the same
/// form as the `[mcmc]` table of a run configuration; null uses defaults. On
/// success `*out` receives a fit to release with [`omb_fit_free`].
///
/// # Safety
/// `dataset` must be a live dataset, `config_toml` null or a NUL-terminated
/// string, and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_stage1(
    dataset: *const OmbDataset,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut OmbFit,
) -> OmbStatus {
    guard(|| {
        let ds = object(dataset, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config: McmcConfig = if config_toml.is_null() {
            McmcConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|e| argument(format!("configuration is not UTF-8: {e}")))?;
            toml::from_str(text).map_err(|e| Failure(OmbStatus::Config, e.to_string()))?
        };
        config.validate()?;
        let data = TransformedDataset::from_matrices(ds.platforms.clone())?;
        let result = run_stage1(&data, &config, seed)?;
        let fit = OmbFit {
            n: data.n(),
            probes: data.platforms.iter().map(PlatformMatrix::p).collect(),
            result,
        };
        out.write(Box::into_raw(Box::new(fit)));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a pointer from [`omb_fit_stage1`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_free(fit: *mut OmbFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be null or a live fit.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_n_patients(fit: *const OmbFit) -> usize {
    fit.as_ref().map_or(0, |f| f.n)
}

/// # Safety
/// `fit` must be null or a live fit.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_n_platforms(fit: *const OmbFit) -> usize {
    fit.as_ref().map_or(0, |f| f.probes.len())
}

/// # Safety
/// `fit` must be null or a live fit.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_n_row_clusters(fit: *const OmbFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.state().h())
}

/// Probe count of platform `t`.
///
/// # Safety
/// `fit` must be a live fit and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_n_probes(fit: *const OmbFit, t: usize, out: *mut usize) -> OmbStatus {
    guard(|| {
        let f = object(fit, "fit")?;
        store(out, f.probes[platform(f, t)?], "out")
    })
}

/// Column cluster count of platform `t`.
///
/// # Safety
/// `fit` must be a live fit and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_n_column_clusters(fit: *const OmbFit, t: usize, out: *mut usize) -> OmbStatus {
    guard(|| {
        let f = object(fit, "fit")?;
        store(out, f.result.state().k(platform(f, t)?), "out")
    })
}

/// One-based row cluster labels into `out`, which must hold one entry per
/// patient.
///
/// # Safety
/// `fit` must be a live fit and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_row_labels(fit: *const OmbFit, out: *mut usize, len: usize) -> OmbStatus {
    guard(|| {
        let f = object(fit, "fit")?;
        let rows = &f.result.state().rows;
        let buf = output(out, len, rows.len(), "out")?;
        for (b, &r) in buf.iter_mut().zip(rows) {
            *b = r + 1;
        }
        Ok(())
    })
}

/// One-based column cluster labels of platform `t` into `out`, which must
/// hold one entry per probe.
///
/// # Safety
/// `fit` must be a live fit and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_column_labels(
    fit: *const OmbFit,
    t: usize,
    out: *mut usize,
    len: usize,
) -> OmbStatus {
    guard(|| {
        let f = object(fit, "fit")?;
        let cols = &f.result.state().columns[platform(f, t)?];
        let buf = output(out, len, cols.len(), "out")?;
        for (b, &c) in buf.iter_mut().zip(cols) {
            *b = c + 1;
        }
        Ok(())
    })
}

/// Posterior mean latent matrix of platform `t`, row clusters by column
/// clusters, into `out`.
///
/// # Safety
/// `fit` must be a live fit and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_phi(fit: *const OmbFit, t: usize, out: *mut f64, len: usize) -> OmbStatus {
    guard(|| {
        let f = object(fit, "fit")?;
        let phi = &f.result.phi_mean[platform(f, t)?];
        output(out, len, phi.as_slice().len(), "out")?.copy_from_slice(phi.as_slice());
        Ok(())
    })
}

/// Posterior median noise standard deviation of platform `t`.
///
/// # Safety
/// `fit` must be a live fit and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn omb_fit_sigma(fit: *const OmbFit, t: usize, out: *mut f64) -> OmbStatus {
    guard(|| {
        let f = object(fit, "fit")?;
        store(out, f.result.sigma[platform(f, t)?], "out")
    })
}

/// Predictive probabilities for the next item under a Pitman-Yor prior with
/// discount `d` and mass `alpha`, given `k` cluster sizes. `out` receives
/// `k + 1` entries, the last for a new cluster.
///
/// # Safety
/// `sizes` must point to `k` readable values and `out` to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn omb_pdp_predictive(
    sizes: *const usize,
    k: usize,
    d: f64,
    alpha: f64,
    out: *mut f64,
    len: usize,
) -> OmbStatus {
    guard(|| {
        let counts = PartitionCounts::new(input(sizes, k, "sizes")?.to_vec())?;
        let probs = pdp_predictive(&counts, d, alpha)?;
        output(out, len, probs.len(), "out")?.copy_from_slice(&probs);
        Ok(())
    })
}

/// Fraction of item pairs on which two labelings of `n` items agree about
/// co-membership.
///
/// # Safety
/// `a` and `b` must each point to `n` readable values and `out` be valid for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn omb_pair_agreement(a: *const usize, b: *const usize, n: usize, out: *mut f64) -> OmbStatus {
    guard(|| {
        let v = pair_agreement(input(a, n, "a")?, input(b, n, "b")?)?;
        store(out, v, "out")
    })
}

/// Bayesian FDR selection at level `alpha` over `k` inclusion probabilities.
/// `selected[i]` is set to 1 for chosen clusters and 0 otherwise;
/// `*cutoff` receives the probability threshold, or NaN when nothing is
/// selected.
///
/// # Safety
/// `b_hat` must point to `k` readable doubles, `selected` to `k` writable
/// bytes, and `cutoff` be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn omb_fdr_select(
    b_hat: *const f64,
    k: usize,
    alpha: f64,
    selected: *mut u8,
    cutoff: *mut f64,
) -> OmbStatus {
    guard(|| {
        let s = fdr_select(input(b_hat, k, "b_hat")?, alpha)?;
        let flags = output(selected, k, k, "selected")?;
        if cutoff.is_null() {
            return Err(null("cutoff"));
        }
        flags.fill(0);
        for &i in &s.selected {
            flags[i] = 1;
        }
        cutoff.write(s.cutoff.unwrap_or(f64::NAN));
        Ok(())
    })
}
