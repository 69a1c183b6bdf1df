//! C interface to `fgc`.
//!
//! Every function returns an [`FgcStatus`]; on failure the message is
//! available from [`fgc_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fgc::error::FgcError;
use fgc::experiment::{run_method, Method, MethodSettings};
use fgc::fairness::FairnessSystem;
use fgc::io::{generate_dataset, read_dataset, write_dataset, write_fit, Dataset};
use fgc::metrics::MetricReport;
use fgc::pipeline::FitResult;
use fgc::synthetic::{NoiseSpec, VsbmParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IsolatedNode = 3,
    NonConvergence = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A dataset: ground-truth graph, cluster and group labels, signals.
pub struct FgcDataset {
    data: Dataset,
}

/// The outcome of one fit.
pub struct FgcFit {
    fit: FitResult,
    config: Vec<(String, String)>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FgcMetrics {
    pub fs: f64,
    pub ee: f64,
    pub ce: f64,
    pub balance: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &FgcError) -> FgcStatus {
    match e {
        FgcError::IsolatedNode { .. } => FgcStatus::IsolatedNode,
        FgcError::NonConvergence { .. } => FgcStatus::NonConvergence,
        FgcError::Numerical(_) | FgcError::BarrierDomain { .. } => FgcStatus::Numerical,
        FgcError::Io { .. } => FgcStatus::Io,
        FgcError::Parse { .. } => FgcStatus::Parse,
        FgcError::Sweep { source, .. } => status_of(source),
        _ => FgcStatus::InvalidArgument,
    }
}

struct Failure(FgcStatus, String);

impl From<FgcError> for Failure {
    fn from(e: FgcError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FgcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            FgcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FgcStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FgcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FgcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn fairness(data: &Dataset) -> Result<FairnessSystem, Failure> {
    Ok(FairnessSystem::new(&data.group_labels, data.num_groups())?)
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn fgc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fgc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic dataset with the default edge probabilities.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fgc_dataset_generate(
    num_nodes: usize,
    num_clusters: usize,
    num_groups: usize,
    num_signals: usize,
    noise_lo: f64,
    noise_hi: f64,
    seed: u64,
    out: *mut *mut FgcDataset,
) -> FgcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let params = VsbmParams {
            num_nodes,
            num_clusters,
            num_groups,
            ..Default::default()
        };
        let noise = NoiseSpec::Uniform {
            lo: noise_lo,
            hi: noise_hi,
        };
        let (_, data) = generate_dataset(&params, num_signals, &noise, seed)?;
        *out = Box::into_raw(Box::new(FgcDataset { data }));
        Ok(())
    })
}

/// Reads a dataset directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fgc_dataset_load(dir: *const c_char, out: *mut *mut FgcDataset) -> FgcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let data = read_dataset(Path::new(text(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(FgcDataset { data }));
        Ok(())
    })
}

/// Writes a dataset directory.
///
/// # Safety
/// `dataset` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fgc_dataset_save(dataset: *const FgcDataset, dir: *const c_char) -> FgcStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        write_dataset(Path::new(text(dir, "dir")?), &ds.data)?;
        Ok(())
    })
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fgc_dataset_num_nodes(dataset: *const FgcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.num_nodes())
}

/// # Safety
/// `dataset` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fgc_dataset_free(dataset: *mut FgcDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fits `method` (e.g. "unified", "corr") on a dataset. `settings` holds
/// `key = value` lines and may be null. The cluster count comes from the
/// dataset labels.
///
/// # Safety
/// `dataset` must come from this library; strings must be NUL-terminated;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit(
    dataset: *const FgcDataset,
    method: *const c_char,
    settings: *const c_char,
    out: *mut *mut FgcFit,
) -> FgcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = handle(dataset, "dataset")?;
        let method: Method = text(method, "method")?.parse()?;
        let mut s = MethodSettings::default();
        if !settings.is_null() {
            let cfg = fgc::config::ConfigFile::parse(text(settings, "settings")?)?;
            for section in &cfg.sections {
                for (k, v) in &section.entries {
                    s.set(k, v)?;
                }
            }
        }
        let fs = fairness(&ds.data)?;
        let fit = run_method(method, &ds.data.signals, &fs, ds.data.num_clusters(), &s)?;
        *out = Box::into_raw(Box::new(FgcFit {
            fit,
            config: s.to_pairs(method),
        }));
        Ok(())
    })
}

/// Number of nodes in the fit, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit_num_nodes(fit: *const FgcFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.labels.len())
}

/// Copies the zero-based cluster labels into `labels[0..len]`.
///
/// # Safety
/// `fit` must come from this library; `labels` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit_labels(fit: *const FgcFit, labels: *mut usize, len: usize) -> FgcStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        copy_out(&f.fit.labels, labels, len)
    })
}

/// Copies the learned edge weights, packed row-major over `i < j`
/// (`D (D - 1) / 2` values).
///
/// # Safety
/// `fit` must come from this library; `weights` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit_weights(fit: *const FgcFit, weights: *mut f64, len: usize) -> FgcStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        copy_out(f.fit.weights.values(), weights, len)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, len: usize) -> Result<(), Failure> {
    if dst.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(Failure(
            FgcStatus::BufferTooSmall,
            format!("buffer holds {len}, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Scores a fit against the dataset it was fitted on.
///
/// # Safety
/// Handles must come from this library; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit_metrics(
    fit: *const FgcFit,
    dataset: *const FgcDataset,
    out: *mut FgcMetrics,
) -> FgcStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        let ds = handle(dataset, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let fs = fairness(&ds.data)?;
        let truth = ds.data.weights.to_laplacian();
        let m = MetricReport::evaluate(
            &f.fit.laplacian(),
            &f.fit.labels,
            &truth,
            &ds.data.cluster_labels,
            &fs,
            f.fit.num_clusters,
        )?;
        *out = FgcMetrics {
            fs: m.fs,
            ee: m.ee,
            ce: m.ce,
            balance: m.balance,
        };
        Ok(())
    })
}

/// Writes a result directory (graph, labels, objective history, settings).
///
/// # Safety
/// `fit` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit_save(fit: *const FgcFit, dir: *const c_char) -> FgcStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        write_fit(Path::new(text(dir, "dir")?), &f.fit, &f.config)?;
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fgc_fit_free(fit: *mut FgcFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
