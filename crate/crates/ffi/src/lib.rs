//! C interface to the selection pipeline.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`FlevrStatus`];
//! on failure [`flevr_last_error`] describes the error on the calling thread.
//! Feature indices are 0-based here, unlike the CLI output.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flevr::data::{load_csv, FeatureSet};
use flevr::learners::StackConfig;
use flevr::missingness::MiceOptions;
use flevr::selection::SelectionRun;
use flevr::{select, Dataset, Error, ErrorControl, SelectionConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlevrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlevrMode {
    Gfwer = 0,
    Pfp = 1,
    Fdr = 2,
}

/// Selection settings. Obtain defaults from [`flevr_select_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FlevrSelectConfig {
    pub alpha: f64,
    pub mode: FlevrMode,
    /// gFWER tolerance (used when `mode` is `Gfwer`).
    pub k: usize,
    /// PFP level (used when `mode` is `Pfp`).
    pub q: f64,
    /// FDR level (used when `mode` is `Fdr`).
    pub f: f64,
    pub folds: usize,
    /// Sampled subsets; 0 selects the default budget.
    pub budget: usize,
    pub imputations: usize,
    pub mice_iterations: usize,
    pub donors: usize,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct FlevrDataset(Dataset);

/// Opaque selection result handle.
pub struct FlevrSelection {
    run: SelectionRun,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> FlevrStatus {
    match e {
        Error::Io { .. } => FlevrStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) | Error::EmptyInput => FlevrStatus::Parse,
        Error::InvalidArgument(_) | Error::MissingOutcome(_) | Error::MissingColumn { .. } => {
            FlevrStatus::InvalidArgument
        }
        _ => FlevrStatus::Numerical,
    }
}

struct Failure(FlevrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FlevrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FlevrStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FlevrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FlevrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FlevrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn flevr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn flevr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn flevr_select_config_default() -> FlevrSelectConfig {
    let mice = MiceOptions::default();
    FlevrSelectConfig {
        alpha: 0.05,
        mode: FlevrMode::Gfwer,
        k: 0,
        q: 0.1,
        f: 0.2,
        folds: 5,
        budget: 0,
        imputations: mice.m,
        mice_iterations: mice.max_iter,
        donors: mice.donors,
        seed: 0,
    }
}

/// Load a CSV file. `na` may be null for the default token "NA".
///
/// # Safety
/// String arguments must be null or nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flevr_dataset_from_csv(
    path: *const c_char,
    outcome: *const c_char,
    na: *const c_char,
    out: *mut *mut FlevrDataset,
) -> FlevrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let outcome = str_arg(outcome, "outcome")?;
        let na = if na.is_null() {
            flevr::data::DEFAULT_NA_TOKEN
        } else {
            str_arg(na, "na")?
        };
        let ds = load_csv(path, outcome, na)?;
        *out = Box::into_raw(Box::new(FlevrDataset(ds)));
        Ok(())
    })
}

/// Build a dataset from a row-major `n × p` feature matrix and an outcome
/// vector. NaN marks a missing cell.
///
/// # Safety
/// `x` must point to `n * p` doubles, `y` to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flevr_dataset_from_arrays(
    x: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut FlevrDataset,
) -> FlevrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if x.is_null() && n * p > 0 {
            return Err(null("x"));
        }
        if y.is_null() && n > 0 {
            return Err(null("y"));
        }
        if n == 0 || p == 0 {
            return Err(invalid("dataset needs at least one row and one feature"));
        }
        let xs = std::slice::from_raw_parts(x, n * p);
        let ys = std::slice::from_raw_parts(y, n);
        let mut columns = vec![Vec::with_capacity(n); p];
        let mut mask = vec![Vec::with_capacity(n); p + 1];
        for (i, row) in xs.chunks_exact(p).enumerate() {
            mask[0].push(!ys[i].is_nan());
            for (j, &v) in row.iter().enumerate() {
                mask[j + 1].push(!v.is_nan());
                columns[j].push(if v.is_nan() { 0.0 } else { v });
            }
        }
        let outcome = ys.iter().map(|&v| if v.is_nan() { 0.0 } else { v }).collect();
        let ds = Dataset::with_mask(columns, outcome, mask)?;
        *out = Box::into_raw(Box::new(FlevrDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle; `n` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flevr_dataset_shape(ds: *const FlevrDataset, n: *mut usize, p: *mut usize) -> FlevrStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if n.is_null() || p.is_null() {
            return Err(null("output"));
        }
        *n = ds.0.n();
        *p = ds.0.p();
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn flevr_dataset_free(ds: *mut FlevrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn selection_config(cfg: &FlevrSelectConfig, data: &Dataset) -> SelectionConfig {
    SelectionConfig {
        measure: None,
        learners: StackConfig::default_for(data.outcome_kind()),
        folds: cfg.folds,
        budget: (cfg.budget > 0).then_some(cfg.budget),
        mice: MiceOptions {
            m: cfg.imputations,
            max_iter: cfg.mice_iterations,
            donors: cfg.donors,
        },
        alpha: cfg.alpha,
        control: match cfg.mode {
            FlevrMode::Gfwer => ErrorControl::Gfwer { k: cfg.k },
            FlevrMode::Pfp => ErrorControl::Pfp { q: cfg.q },
            FlevrMode::Fdr => ErrorControl::Fdr { f: cfg.f },
        },
    }
}

/// Run importance estimation, testing and selection.
///
/// # Safety
/// `ds` and `cfg` must be valid pointers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flevr_select(
    ds: *const FlevrDataset,
    cfg: *const FlevrSelectConfig,
    out: *mut *mut FlevrSelection,
) -> FlevrStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let run = select(&ds.0, &selection_config(cfg, &ds.0), cfg.seed)?;
        let report = run.report(ds.0.feature_names(), cfg.seed);
        let json = serde_json::to_string(&report).map_err(Error::from)?;
        let json = CString::new(json).map_err(|_| invalid("report contains a nul byte"))?;
        *out = Box::into_raw(Box::new(FlevrSelection { run, json }));
        Ok(())
    })
}

/// Number of features the selection was run on.
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_num_features(sel: *const FlevrSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.run.pooled.p())
}

unsafe fn copy_set(set: &FeatureSet, buf: *mut usize, cap: usize, len: *mut usize) -> Result<(), Failure> {
    if len.is_null() {
        return Err(null("len"));
    }
    *len = set.len();
    if set.len() > cap {
        return Err(invalid(format!("buffer holds {cap} entries, need {}", set.len())));
    }
    if !set.is_empty() {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(set.indices().as_ptr(), buf, set.len());
    }
    Ok(())
}

/// Copy the final selected set (0-based, ascending) into `buf`. `len`
/// receives the set size even when `cap` is too small.
///
/// # Safety
/// `buf` must hold `cap` entries; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_final_set(
    sel: *const FlevrSelection,
    buf: *mut usize,
    cap: usize,
    len: *mut usize,
) -> FlevrStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        copy_set(&sel.run.result.final_set, buf, cap, len)
    })
}

/// Copy the Holm-selected initial set (0-based, ascending).
///
/// # Safety
/// As for [`flevr_selection_final_set`].
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_initial_set(
    sel: *const FlevrSelection,
    buf: *mut usize,
    cap: usize,
    len: *mut usize,
) -> FlevrStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        copy_set(&sel.run.result.initial_set, buf, cap, len)
    })
}

unsafe fn copy_values(values: &[f64], buf: *mut f64, cap: usize) -> Result<(), Failure> {
    if cap < values.len() {
        return Err(invalid(format!("buffer holds {cap} values, need {}", values.len())));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Copy the pooled importance estimates (one per feature).
///
/// # Safety
/// `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_importance(sel: *const FlevrSelection, buf: *mut f64, cap: usize) -> FlevrStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        copy_values(&sel.run.pooled.psi_bar, buf, cap)
    })
}

/// Copy the Holm-adjusted p-values (one per feature).
///
/// # Safety
/// `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_p_adjusted(sel: *const FlevrSelection, buf: *mut f64, cap: usize) -> FlevrStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        copy_values(&sel.run.tests.p_adjusted, buf, cap)
    })
}

/// JSON report (1-based indices, as written by the CLI). Owned by the
/// handle; valid until it is freed.
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_json(sel: *const FlevrSelection) -> *const c_char {
    sel.as_ref().map_or(ptr::null(), |s| s.json.as_ptr())
}

/// # Safety
/// `sel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn flevr_selection_free(sel: *mut FlevrSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}
