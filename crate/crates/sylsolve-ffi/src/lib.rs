//! C ABI over `sylsolve`.
//!
//! Systems and solutions live behind opaque handles. Every fallible call
//! returns a [`SylStatus`]; on failure the message is kept per thread and can
//! be read with [`syl_last_error`]. Matrices cross the boundary column-major
//! with interleaved real and imaginary parts.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sylsolve::certify::{certify_system, Method, Reason, Verdict};
use sylsolve::model::{parse_system, SylvesterSystem};
use sylsolve::trisolve::solve_system;
use sylsolve::{Error, Matrix};

/// Status codes. `SYL_STATUS_OK` is zero; everything else is an error.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SylStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Invalid = 4,
    Unsupported = 5,
    Singular = 6,
    NoConvergence = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Internal = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SylMethod {
    Formal = 0,
    Pencil = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SylVerdict {
    Nonsingular = 0,
    Singular = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SylReason {
    Ok = 0,
    ProductIrregular = 1,
    SpectraIntersect = 2,
    ReciprocalPair = 3,
    MinusOneMultiplicity = 4,
    PencilIrregular = 5,
    RootOfUnityMultiplicity = 6,
    EliminationSingularCoeff = 7,
}

/// Opaque parsed system.
pub struct SylSystem {
    inner: SylvesterSystem,
}

/// Opaque solution: one `n × n` matrix per unknown.
pub struct SylSolution {
    xs: Vec<Matrix>,
}

/// Certificate summary. `component` is 0-based, or -1 when the verdict is
/// not tied to one component.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SylCertificate {
    pub verdict: SylVerdict,
    pub reason: SylReason,
    pub component: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> SylStatus {
    match err {
        Error::Parse { .. } => SylStatus::Parse,
        Error::Dimension(_) | Error::Invalid(_) => SylStatus::Invalid,
        Error::Unsupported(_) => SylStatus::Unsupported,
        Error::Singular(_) | Error::SingularSmallSystem { .. } | Error::IrregularPencil => SylStatus::Singular,
        Error::NoConvergence { .. } => SylStatus::NoConvergence,
        Error::CapExceeded { .. } | Error::Io(_) => SylStatus::Internal,
    }
}

fn fail(err: Error) -> SylStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> SylStatus {
    set_error(format!("null pointer passed as {what}"));
    SylStatus::NullArgument
}

fn guard(f: impl FnOnce() -> SylStatus) -> SylStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            SylStatus::Panic
        }
    }
}

fn reason_of(r: Reason) -> SylReason {
    match r {
        Reason::Ok => SylReason::Ok,
        Reason::ProductIrregular => SylReason::ProductIrregular,
        Reason::SpectraIntersect => SylReason::SpectraIntersect,
        Reason::ReciprocalPair => SylReason::ReciprocalPair,
        Reason::MinusOneMultiplicity => SylReason::MinusOneMultiplicity,
        Reason::PencilIrregular => SylReason::PencilIrregular,
        Reason::RootOfUnityMultiplicity => SylReason::RootOfUnityMultiplicity,
        Reason::EliminationSingularCoeff => SylReason::EliminationSingularCoeff,
    }
}

/// Parse a system from its text form. On success `*out` owns a new handle
/// that must be released with [`syl_system_free`].
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn syl_system_parse(text: *const c_char, out: *mut *mut SylSystem) -> SylStatus {
    guard(|| {
        if text.is_null() {
            return null("text");
        }
        if out.is_null() {
            return null("out");
        }
        *out = ptr::null_mut();
        let Ok(s) = CStr::from_ptr(text).to_str() else {
            set_error("input is not valid UTF-8");
            return SylStatus::InvalidUtf8;
        };
        match parse_system(s) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SylSystem { inner }));
                SylStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a system handle. Null is ignored.
///
/// # Safety
/// `sys` must come from [`syl_system_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn syl_system_free(sys: *mut SylSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Matrix size `n`, number of unknowns and number of equations.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn syl_system_shape(
    sys: *const SylSystem,
    n: *mut usize,
    unknowns: *mut usize,
    equations: *mut usize,
) -> SylStatus {
    if sys.is_null() {
        return null("sys");
    }
    if n.is_null() || unknowns.is_null() || equations.is_null() {
        return null("output");
    }
    let s = &(*sys).inner;
    *n = s.n;
    *unknowns = s.unknowns;
    *equations = s.equations.len();
    SylStatus::Ok
}

/// Decide nonsingularity without solving.
///
/// # Safety
/// `sys` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syl_system_certify(
    sys: *const SylSystem,
    method: SylMethod,
    out: *mut SylCertificate,
) -> SylStatus {
    guard(|| {
        if sys.is_null() {
            return null("sys");
        }
        if out.is_null() {
            return null("out");
        }
        let m = match method {
            SylMethod::Formal => Method::Formal,
            SylMethod::Pencil => Method::Pencil,
        };
        match certify_system(&(*sys).inner, m) {
            Ok(c) => {
                *out = SylCertificate {
                    verdict: match c.verdict {
                        Verdict::Nonsingular => SylVerdict::Nonsingular,
                        Verdict::Singular => SylVerdict::Singular,
                    },
                    reason: reason_of(c.reason),
                    component: c.component.map_or(-1, |k| k as i64),
                };
                if !c.is_nonsingular() {
                    set_error(c.to_string());
                }
                SylStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Solve the system. A singular system yields `SYL_STATUS_SINGULAR`.
///
/// # Safety
/// `sys` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syl_system_solve(sys: *const SylSystem, out: *mut *mut SylSolution) -> SylStatus {
    guard(|| {
        if sys.is_null() {
            return null("sys");
        }
        if out.is_null() {
            return null("out");
        }
        *out = ptr::null_mut();
        match solve_system(&(*sys).inner) {
            Ok(xs) => {
                *out = Box::into_raw(Box::new(SylSolution { xs }));
                SylStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Largest Frobenius norm over the per-equation residuals of `sol`.
///
/// # Safety
/// All pointers must be valid, and `sol` must solve `sys`.
#[no_mangle]
pub unsafe extern "C" fn syl_solution_residual(
    sys: *const SylSystem,
    sol: *const SylSolution,
    out: *mut f64,
) -> SylStatus {
    guard(|| {
        if sys.is_null() || sol.is_null() {
            return null("handle");
        }
        if out.is_null() {
            return null("out");
        }
        let (s, xs) = (&(*sys).inner, &(*sol).xs);
        if xs.len() != s.unknowns {
            set_error("solution does not belong to this system");
            return SylStatus::Invalid;
        }
        *out = s.residuals(xs).iter().map(Matrix::frobenius).fold(0.0, f64::max);
        SylStatus::Ok
    })
}

/// Number of unknowns held by a solution; 0 for null.
///
/// # Safety
/// `sol` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn syl_solution_count(sol: *const SylSolution) -> usize {
    if sol.is_null() {
        0
    } else {
        (&*sol).xs.len()
    }
}

/// Copy unknown `k` (0-based) into `buf`, column-major with interleaved
/// real/imaginary parts. `len` counts doubles and must be at least `2·n·n`;
/// `*written` receives the number needed.
///
/// # Safety
/// `buf` must hold `len` doubles; `sol` and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syl_solution_get(
    sol: *const SylSolution,
    k: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> SylStatus {
    if sol.is_null() {
        return null("sol");
    }
    if written.is_null() {
        return null("written");
    }
    let sol = &*sol;
    let Some(x) = sol.xs.get(k) else {
        set_error(format!("unknown index {k} out of range"));
        return SylStatus::OutOfRange;
    };
    let need = 2 * x.data().len();
    *written = need;
    if buf.is_null() || len < need {
        set_error(format!("buffer holds {len} doubles, {need} needed"));
        return SylStatus::BufferTooSmall;
    }
    let dst = std::slice::from_raw_parts_mut(buf, need);
    for (pair, z) in dst.chunks_exact_mut(2).zip(x.data()) {
        pair[0] = z.re;
        pair[1] = z.im;
    }
    SylStatus::Ok
}

/// Release a solution handle. Null is ignored.
///
/// # Safety
/// `sol` must come from [`syl_system_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn syl_solution_free(sol: *mut SylSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to fit). Returns the full length including the NUL, so a
/// zero-length call sizes the buffer.
///
/// # Safety
/// `buf` must hold `len` bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn syl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn syl_status_name(status: SylStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SylStatus::Ok => c"ok",
        SylStatus::NullArgument => c"null argument",
        SylStatus::InvalidUtf8 => c"invalid utf-8",
        SylStatus::Parse => c"parse error",
        SylStatus::Invalid => c"invalid system",
        SylStatus::Unsupported => c"unsupported",
        SylStatus::Singular => c"singular",
        SylStatus::NoConvergence => c"no convergence",
        SylStatus::OutOfRange => c"out of range",
        SylStatus::BufferTooSmall => c"buffer too small",
        SylStatus::Panic => c"panic",
        SylStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_names_are_distinct() {
        let all = [
            SylStatus::Ok,
            SylStatus::NullArgument,
            SylStatus::InvalidUtf8,
            SylStatus::Parse,
            SylStatus::Invalid,
            SylStatus::Unsupported,
            SylStatus::Singular,
            SylStatus::NoConvergence,
            SylStatus::OutOfRange,
            SylStatus::BufferTooSmall,
            SylStatus::Panic,
            SylStatus::Internal,
        ];
        let names: std::collections::HashSet<_> =
            all.iter().map(|&s| unsafe { CStr::from_ptr(syl_status_name(s)) }.to_owned()).collect();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn error_buffer_truncates() {
        set_error("abcdef");
        let mut buf = [0 as c_char; 4];
        let need = unsafe { syl_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(need, 7);
        let got = unsafe { CStr::from_ptr(buf.as_ptr()) };
        assert_eq!(got.to_str().unwrap(), "abc");
        assert_eq!(unsafe { syl_last_error(ptr::null_mut(), 0) }, 7);
    }
}
