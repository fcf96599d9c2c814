//! C interface to the polytope type and the closed-loop controller.
//!
//! Every function returns a [`TmpcStatus`]. On failure the message is kept
//! per thread and can be read with [`tmpc_last_error`]. Objects are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use tubempc::controller::{Controller, QpStatus, ReferenceTrajectory};
use tubempc::geometry::{HPolytope, SupportFunction};
use tubempc::sim::{generate_reference, load_assets, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Panic = 6,
}

/// Outcome of the last control step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmpcStepResult {
    pub u_bar: f64,
    pub du: f64,
    pub active_model: usize,
    pub switched: bool,
    pub backup: bool,
    /// 0 optimal, 1 relaxed (solved without the feasible-set rows),
    /// 2 infeasible (command held), 3 iteration limit (command held).
    pub qp_status: i32,
}

pub struct TmpcPolytope(HPolytope);

pub struct TmpcController {
    inner: Controller,
    reference: ReferenceTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &tubempc::Error) -> TmpcStatus {
    use tubempc::Error as E;
    match e {
        E::Io(_) => TmpcStatus::Io,
        E::Json(_) | E::Csv(_) => TmpcStatus::Parse,
        E::Dimension(_) | E::Config(_) | E::Model(_) => TmpcStatus::InvalidArgument,
        _ => TmpcStatus::Numerical,
    }
}

/// Runs `f`, records its error message and converts panics.
fn guard(f: impl FnOnce() -> Result<(), (TmpcStatus, String)>) -> TmpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TmpcStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("panic inside the library");
            TmpcStatus::Panic
        }
    }
}

fn lib_err(e: tubempc::Error) -> (TmpcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TmpcStatus, String) {
    (TmpcStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (TmpcStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TmpcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TmpcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be null or come from a `tmpc_*` function returning an owned
/// string, and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tmpc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Polytope `{x : G x <= h}` from a row-major `rows x dim` matrix `g`.
///
/// # Safety
/// `g` must hold `rows * dim` values, `h` `rows` values, and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_new(
    g: *const f64,
    h: *const f64,
    rows: usize,
    dim: usize,
    out: *mut *mut TmpcPolytope,
) -> TmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 {
            return Err((TmpcStatus::InvalidArgument, "dimension must be positive".into()));
        }
        let g = slice(g, rows * dim, "g")?;
        let h = slice(h, rows, "h")?;
        let p = if rows == 0 {
            HPolytope::universe(dim)
        } else {
            HPolytope::new(DMatrix::from_row_slice(rows, dim, g), DVector::from_column_slice(h)).map_err(lib_err)?
        };
        *out = Box::into_raw(Box::new(TmpcPolytope(p)));
        Ok(())
    })
}

/// Polytope from its JSON form `{"G": [[...]], "g": [...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_from_json(json: *const c_char, out: *mut *mut TmpcPolytope) -> TmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = string(json, "json")?;
        let p: HPolytope = serde_json::from_str(text).map_err(|e| (TmpcStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(TmpcPolytope(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a live polytope handle.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_free(p: *mut TmpcPolytope) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live polytope handle and `dim`, `rows` writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_shape(p: *const TmpcPolytope, dim: *mut usize, rows: *mut usize) -> TmpcStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("polytope"))?;
        if dim.is_null() || rows.is_null() {
            return Err(null("out"));
        }
        *dim = p.0.dim();
        *rows = p.0.num_rows();
        Ok(())
    })
}

/// Membership of `x` with tolerance `tol`.
///
/// # Safety
/// `p` must be a live handle, `x` hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_contains(
    p: *const TmpcPolytope,
    x: *const f64,
    n: usize,
    tol: f64,
    out: *mut bool,
) -> TmpcStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("polytope"))?;
        let x = slice(x, n, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if n != p.0.dim() {
            return Err((
                TmpcStatus::InvalidArgument,
                format!("point has {n} entries, set dimension {}", p.0.dim()),
            ));
        }
        *out = p.0.contains_tol(&DVector::from_column_slice(x), tol);
        Ok(())
    })
}

/// Support function `max_{x in P} d'x`.
///
/// # Safety
/// `p` must be a live handle, `d` hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_support(
    p: *const TmpcPolytope,
    d: *const f64,
    n: usize,
    out: *mut f64,
) -> TmpcStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("polytope"))?;
        let d = slice(d, n, "d")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = p.0.support(&DVector::from_column_slice(d)).map_err(lib_err)?;
        Ok(())
    })
}

/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_pontryagin_diff(
    a: *const TmpcPolytope,
    b: *const TmpcPolytope,
    out: *mut *mut TmpcPolytope,
) -> TmpcStatus {
    guard(|| {
        let (a, b) = (
            a.as_ref().ok_or_else(|| null("a"))?,
            b.as_ref().ok_or_else(|| null("b"))?,
        );
        if out.is_null() {
            return Err(null("out"));
        }
        let p = a.0.pontryagin_diff(&b.0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TmpcPolytope(p)));
        Ok(())
    })
}

/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_polytope_minkowski_sum(
    a: *const TmpcPolytope,
    b: *const TmpcPolytope,
    out: *mut *mut TmpcPolytope,
) -> TmpcStatus {
    guard(|| {
        let (a, b) = (
            a.as_ref().ok_or_else(|| null("a"))?,
            b.as_ref().ok_or_else(|| null("b"))?,
        );
        if out.is_null() {
            return Err(null("out"));
        }
        let p = a.0.minkowski_sum(&b.0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TmpcPolytope(p)));
        Ok(())
    })
}

/// Controller for a scenario JSON file: loads (or synthesizes) the bank
/// and bundles it names and tracks the scenario's reference profile. The
/// state is reset to standstill at the origin.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_load(path: *const c_char, out: *mut *mut TmpcController) -> TmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = Scenario::load(Path::new(string(path, "path")?)).map_err(lib_err)?;
        let (bank, bundles) = load_assets(&sc).map_err(lib_err)?;
        let reference = generate_reference(&sc.reference, sc.dt, sc.duration).map_err(lib_err)?;
        let mut inner = Controller::new(bank, bundles, sc.controller.clone()).map_err(lib_err)?;
        inner.reset(&DVector::zeros(3), 0.0);
        *out = Box::into_raw(Box::new(TmpcController { inner, reference }));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_free(c: *mut TmpcController) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Replaces the reference with samples `s`, `v`, `a` of length `len` at the
/// bank's sample time.
///
/// # Safety
/// `c` must be a live handle and each array hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_set_reference(
    c: *mut TmpcController,
    s: *const f64,
    v: *const f64,
    a: *const f64,
    len: usize,
) -> TmpcStatus {
    guard(|| {
        let c = c.as_mut().ok_or_else(|| null("controller"))?;
        c.reference = ReferenceTrajectory {
            dt: c.reference.dt,
            s: slice(s, len, "s")?.to_vec(),
            v: slice(v, len, "v")?.to_vec(),
            a: slice(a, len, "a")?.to_vec(),
        };
        Ok(())
    })
}

/// Restarts at measurement `y = (s, v, a)` with previous command `u0`.
///
/// # Safety
/// `c` must be a live handle and `y` hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_reset(c: *mut TmpcController, y: *const f64, u0: f64) -> TmpcStatus {
    guard(|| {
        let c = c.as_mut().ok_or_else(|| null("controller"))?;
        let y = slice(y, 3, "y")?;
        c.inner.reset(&DVector::from_column_slice(y), u0);
        Ok(())
    })
}

/// One control step on measurement `y = (s, v, a)`.
///
/// # Safety
/// `c` must be a live handle, `y` hold 3 values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_step(
    c: *mut TmpcController,
    y: *const f64,
    out: *mut TmpcStepResult,
) -> TmpcStatus {
    guard(|| {
        let c = c.as_mut().ok_or_else(|| null("controller"))?;
        let y = slice(y, 3, "y")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = c
            .inner
            .control_step(&DVector::from_column_slice(y), &c.reference)
            .map_err(lib_err)?;
        *out = TmpcStepResult {
            u_bar: d.u_bar,
            du: d.du,
            active_model: d.active_model,
            switched: d.switched,
            backup: d.backup,
            qp_status: match d.qp_status {
                QpStatus::Optimal => 0,
                QpStatus::Relaxed => 1,
                QpStatus::Infeasible => 2,
                QpStatus::MaxIter => 3,
            },
        };
        Ok(())
    })
}

/// Run-time state as JSON; free with [`tmpc_string_free`].
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_checkpoint(c: *const TmpcController, out: *mut *mut c_char) -> TmpcStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("controller"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = serde_json::to_string(&c.inner.checkpoint()).map_err(|e| (TmpcStatus::Parse, e.to_string()))?;
        *out = CString::new(json)
            .map_err(|e| (TmpcStatus::Parse, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Restores a state produced by [`tmpc_controller_checkpoint`].
///
/// # Safety
/// `c` must be a live handle and `json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tmpc_controller_restore(c: *mut TmpcController, json: *const c_char) -> TmpcStatus {
    guard(|| {
        let c = c.as_mut().ok_or_else(|| null("controller"))?;
        let state = serde_json::from_str(string(json, "json")?).map_err(|e| (TmpcStatus::Parse, e.to_string()))?;
        c.inner.restore(state).map_err(lib_err)
    })
}
