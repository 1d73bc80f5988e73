//! C ABI for `gaussian-fisher`.
//!
//! Every function returns a [`GfStatus`]; on failure a description is kept
//! per thread and can be read with [`gf_last_error_message`]. Tables are
//! opaque [`GfTable`] handles released with [`gf_table_free`]; strings
//! returned through out-pointers are released with [`gf_string_free`].
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gaussian_fisher::config::parse_config;
use gaussian_fisher::fisher::{crb_bound, gaussian_fi};
use gaussian_fisher::runner::run;
use gaussian_fisher::table::ResultTable;
use gaussian_fisher::Error;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidParameter = 4,
    Dimension = 5,
    Numerical = 6,
    Io = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Result table of one run: named `f64` columns plus `key: value` metadata.
pub struct GfTable(ResultTable);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: GfStatus, msg: impl Into<String>) -> GfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> GfStatus {
    let status = match &e {
        Error::Config(_) => GfStatus::Config,
        Error::InvalidParameter(_) => GfStatus::InvalidParameter,
        Error::Dimension(_) => GfStatus::Dimension,
        Error::Io(_) => GfStatus::Io,
        e if e.is_numerical() => GfStatus::Numerical,
        _ => GfStatus::InvalidParameter,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> GfStatus) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GfStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn table<'a>(t: *const GfTable) -> Result<&'a ResultTable, GfStatus> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| fail(GfStatus::NullPointer, "table handle is null"))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, GfStatus> {
    if s.is_null() {
        return Err(fail(GfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(GfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T) -> GfStatus {
    if out.is_null() {
        return fail(GfStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    GfStatus::Ok
}

unsafe fn put_string(out: *mut *mut c_char, s: &str) -> GfStatus {
    match CString::new(s) {
        Ok(c) => {
            if out.is_null() {
                return fail(GfStatus::NullPointer, "output pointer is null");
            }
            out.write(c.into_raw());
            GfStatus::Ok
        }
        Err(_) => fail(GfStatus::InvalidParameter, "string contains an interior NUL"),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn gf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Runs a JSON configuration. `workers = 0` uses all cores; the result
/// does not depend on it. On success `*out` owns a new table.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_run_config(config_json: *const c_char, workers: u32, out: *mut *mut GfTable) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "output pointer is null");
        }
        let json = tri!(text(config_json, "configuration"));
        let cfg = match parse_config(json) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let workers = (workers > 0).then_some(workers as usize);
        match run(&cfg, workers) {
            Ok(t) => put(out, Box::into_raw(Box::new(GfTable(t)))),
            Err(e) => from_error(e),
        }
    })
}

/// Releases a table; null is ignored.
///
/// # Safety
/// `t` must come from [`gf_run_config`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gf_table_free(t: *mut GfTable) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live table and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_rows(t: *const GfTable, out: *mut usize) -> GfStatus {
    guard(|| put(out, tri!(table(t)).rows.len()))
}

/// # Safety
/// `t` must be a live table and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_cols(t: *const GfTable, out: *mut usize) -> GfStatus {
    guard(|| put(out, tri!(table(t)).columns.len()))
}

/// # Safety
/// `t` must be a live table and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_value(t: *const GfTable, row: usize, col: usize, out: *mut f64) -> GfStatus {
    guard(|| {
        let tab = tri!(table(t));
        match tab.rows.get(row).and_then(|r| r.get(col)) {
            Some(&v) => put(out, v),
            None => fail(
                GfStatus::OutOfRange,
                format!("cell ({row}, {col}) outside a {}x{} table", tab.rows.len(), tab.columns.len()),
            ),
        }
    })
}

/// Index of a column by name.
///
/// # Safety
/// `t` must be a live table, `name` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_column_index(t: *const GfTable, name: *const c_char, out: *mut usize) -> GfStatus {
    guard(|| {
        let tab = tri!(table(t));
        let name = tri!(text(name, "column name"));
        match tab.column_index(name) {
            Some(i) => put(out, i),
            None => fail(GfStatus::OutOfRange, format!("no column named '{name}'")),
        }
    })
}

/// Name of column `col`; free the result with [`gf_string_free`].
///
/// # Safety
/// `t` must be a live table and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_column_name(t: *const GfTable, col: usize, out: *mut *mut c_char) -> GfStatus {
    guard(|| {
        let tab = tri!(table(t));
        match tab.columns.get(col) {
            Some(name) => put_string(out, name),
            None => fail(GfStatus::OutOfRange, format!("column {col} outside a table of {}", tab.columns.len())),
        }
    })
}

/// Metadata value for `key`; free the result with [`gf_string_free`].
///
/// # Safety
/// `t` must be a live table, `key` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_meta(t: *const GfTable, key: *const c_char, out: *mut *mut c_char) -> GfStatus {
    guard(|| {
        let tab = tri!(table(t));
        let key = tri!(text(key, "metadata key"));
        match tab.meta(key) {
            Some(v) => put_string(out, v),
            None => fail(GfStatus::OutOfRange, format!("no metadata key '{key}'")),
        }
    })
}

/// The table as CSV (identical to the command-line output); free the
/// result with [`gf_string_free`].
///
/// # Safety
/// `t` must be a live table and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_to_csv(t: *const GfTable, out: *mut *mut c_char) -> GfStatus {
    guard(|| put_string(out, &tri!(table(t)).to_csv()))
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cramér-Rao variance bound `1 / (repetitions * fisher)`; infinite for zero information.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_crb_bound(fisher: f64, repetitions: u64, out: *mut f64) -> GfStatus {
    guard(|| match crb_bound(fisher, repetitions) {
        Ok(v) => put(out, v),
        Err(e) => from_error(e),
    })
}

/// Fisher information `dmu^T sigma^+ dmu` of a Gaussian location family.
/// `sigma` is `n x n`, row major.
///
/// # Safety
/// `d_mean` must point to `n` values, `sigma` to `n * n`, and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_gaussian_fi(d_mean: *const f64, sigma: *const f64, n: usize, out: *mut f64) -> GfStatus {
    guard(|| {
        if d_mean.is_null() || sigma.is_null() {
            return fail(GfStatus::NullPointer, "input array is null");
        }
        if n == 0 {
            return fail(GfStatus::Dimension, "dimension must be positive");
        }
        let Some(nn) = n.checked_mul(n) else {
            return fail(GfStatus::Dimension, "dimension overflows");
        };
        let dm = DVector::from_column_slice(std::slice::from_raw_parts(d_mean, n));
        let s = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(sigma, nn));
        match gaussian_fi(&dm, &s) {
            Ok(v) => put(out, v),
            Err(e) => from_error(e),
        }
    })
}
