//! C ABI over `cwsl-core`.
//!
//! Problems, spectra and reconstructions live behind opaque handles that the
//! caller frees with the matching `*_free`. Every fallible call returns a
//! `CwslStatus`; on failure the message is kept per thread and read back with
//! `cwsl_last_error`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cwsl_core::cli::weyl_samples_for;
use cwsl_core::forward::{locate_eigenvalues, ForwardConfig};
use cwsl_core::inverse::{invert, invert_with_constants, InverseConfig, ReconstructionResult};
use cwsl_core::io::{self, ProblemFile, ReconstructionFile, SpectrumFile};
use cwsl_core::model::validate_problem;
use cwsl_core::recovery::RecoveredConstants;
use cwsl_core::{Error, ProblemSpec, ValidationMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad input: schema, validation or an unusable request.
    Input = 3,
    /// A numerical stage failed.
    Solver = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// One eigenvalue with its Weyl coefficient.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CwslEigenvalue {
    pub k: usize,
    pub branch: u8,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub m_re: f64,
    pub m_im: f64,
}

pub struct CwslProblem {
    spec: ProblemSpec,
    mode: ValidationMode,
}

pub struct CwslSpectrum {
    file: SpectrumFile,
}

pub struct CwslReconstruction {
    file: ReconstructionFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CwslStatus, msg: impl Into<String>) -> CwslStatus {
    set_error(msg.into());
    status
}

fn from_core(e: Error) -> CwslStatus {
    let status = if e.is_validation() { CwslStatus::Input } else { CwslStatus::Solver };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> CwslStatus) -> CwslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            fail(CwslStatus::Panic, format!("panic: {}", msg.unwrap_or_default()))
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, CwslStatus> {
    if s.is_null() {
        return Err(fail(CwslStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(CwslStatus::InvalidUtf8, e.to_string()))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> CwslStatus {
    *out = Box::into_raw(Box::new(value));
    CwslStatus::Ok
}

unsafe fn emit_string(out: *mut *mut c_char, s: String) -> CwslStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            CwslStatus::Ok
        }
        Err(e) => fail(CwslStatus::Solver, e.to_string()),
    }
}

macro_rules! ptr {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(CwslStatus::NullPointer, concat!("null ", stringify!($p))),
        }
    };
}

macro_rules! out {
    ($p:expr) => {
        if $p.is_null() {
            return fail(CwslStatus::NullPointer, concat!("null ", stringify!($p)));
        }
    };
}

macro_rules! core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_core(e),
        }
    };
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cwsl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by a `*_to_json` call.
///
/// # Safety
/// `s` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn cwsl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a problem document (the `forward --input` format) and validates it.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cwsl_problem_from_json(json: *const c_char, out: *mut *mut CwslProblem) -> CwslStatus {
    guard(|| {
        out!(out);
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let file: ProblemFile = core!(io::parse_versioned(text, "problem"));
        let spec = core!(file.to_spec());
        core!(validate_problem(&spec, file.mode));
        emit(out, CwslProblem { spec, mode: file.mode })
    })
}

/// # Safety
/// `p` is null or a live handle from `cwsl_problem_from_json`.
#[no_mangle]
pub unsafe extern "C" fn cwsl_problem_free(p: *mut CwslProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Computes `n` eigenvalues per branch with default solver settings, plus
/// `weyl_samples` Weyl function samples for constant recovery (strict mode).
///
/// # Safety
/// `problem` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cwsl_forward(problem: *const CwslProblem, n: usize, weyl_samples: usize, out: *mut *mut CwslSpectrum) -> CwslStatus {
    guard(|| {
        out!(out);
        let p = ptr!(problem);
        if n == 0 {
            return fail(CwslStatus::Input, "n must be positive");
        }
        let cfg = ForwardConfig::default();
        let data = core!(locate_eigenvalues(&p.spec, p.mode, n, &cfg));
        let weyl = core!(weyl_samples_for(&p.spec, p.mode, &cfg, weyl_samples));
        let file = core!(SpectrumFile::new(p.spec.length, p.mode, &data, weyl, &cfg, Some(&p.spec)));
        emit(out, CwslSpectrum { file })
    })
}

/// Parses a spectrum document (the `forward --output` format).
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cwsl_spectrum_from_json(json: *const c_char, out: *mut *mut CwslSpectrum) -> CwslStatus {
    guard(|| {
        out!(out);
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let file: SpectrumFile = core!(io::parse_versioned(text, "spectrum"));
        core!(file.to_data());
        emit(out, CwslSpectrum { file })
    })
}

/// # Safety
/// `s` is a live handle; `out` is writable. Free the result with `cwsl_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cwsl_spectrum_to_json(s: *const CwslSpectrum, out: *mut *mut c_char) -> CwslStatus {
    guard(|| {
        out!(out);
        let s = ptr!(s);
        emit_string(out, core!(io::to_json(&s.file)))
    })
}

/// Number of eigenvalues held, or 0 for a null handle.
///
/// # Safety
/// `s` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwsl_spectrum_len(s: *const CwslSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.file.entries.len())
}

/// Entry `index`, ordered by branch then `k`.
///
/// # Safety
/// `s` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cwsl_spectrum_get(s: *const CwslSpectrum, index: usize, out: *mut CwslEigenvalue) -> CwslStatus {
    guard(|| {
        out!(out);
        let s = ptr!(s);
        let Some(d) = s.file.entries.get(index) else {
            return fail(CwslStatus::OutOfRange, format!("index {index} of {}", s.file.entries.len()));
        };
        *out = CwslEigenvalue { k: d.k, branch: d.branch, lambda_re: d.lambda.re, lambda_im: d.lambda.im, m_re: d.m.re, m_im: d.m.im };
        CwslStatus::Ok
    })
}

/// # Safety
/// `s` is null or a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn cwsl_spectrum_free(s: *mut CwslSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Reconstructs the potential and boundary data from a strict-mode spectrum.
/// `truncation` and `x_grid` of 0 keep the defaults. With `known` non-null its
/// interface, coefficients and jump are used instead of recovering them.
///
/// # Safety
/// `spectrum` is a live handle, `known` is null or a live handle, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cwsl_invert(
    spectrum: *const CwslSpectrum,
    truncation: usize,
    x_grid: usize,
    known: *const CwslProblem,
    out: *mut *mut CwslReconstruction,
) -> CwslStatus {
    guard(|| {
        out!(out);
        let s = ptr!(spectrum);
        if s.file.mode != ValidationMode::Strict {
            return from_core(Error::StrictModeRequired("the spectrum was computed in relaxed mode; inversion needs two branches"));
        }
        let mut cfg = InverseConfig::default();
        if truncation > 0 {
            cfg.truncation = truncation;
        }
        if x_grid > 0 {
            cfg.x_grid = x_grid;
        }
        let data = core!(s.file.to_data());
        let length = s.file.length;
        let result: ReconstructionResult = match known.as_ref() {
            Some(p) => {
                let rec = core!(RecoveredConstants::from_problem(&p.spec));
                core!(invert_with_constants(&data, rec, length, &cfg))
            }
            None => {
                let weyl = (!s.file.weyl_samples.is_empty()).then_some(s.file.weyl_samples.as_slice());
                core!(invert(&data, weyl, length, &cfg))
            }
        };
        let file = core!(ReconstructionFile::new(length, &cfg, !known.is_null(), result));
        emit(out, CwslReconstruction { file })
    })
}

/// Number of grid points in the reconstructed potential.
///
/// # Safety
/// `r` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwsl_reconstruction_len(r: *const CwslReconstruction) -> usize {
    r.as_ref().map_or(0, |r| r.file.result.x.len())
}

/// Grid point `index` of the reconstructed potential.
///
/// # Safety
/// `r` is a live handle; `x`, `q_re`, `q_im` are writable.
#[no_mangle]
pub unsafe extern "C" fn cwsl_reconstruction_q(r: *const CwslReconstruction, index: usize, x: *mut f64, q_re: *mut f64, q_im: *mut f64) -> CwslStatus {
    guard(|| {
        out!(x);
        out!(q_re);
        out!(q_im);
        let r = &ptr!(r).file.result;
        if index >= r.x.len() {
            return fail(CwslStatus::OutOfRange, format!("index {index} of {}", r.x.len()));
        }
        *x = r.x[index];
        *q_re = r.q[index].re;
        *q_im = r.q[index].im;
        CwslStatus::Ok
    })
}

/// The reconstruction document (the `invert --output` format).
///
/// # Safety
/// `r` is a live handle; `out` is writable. Free the result with `cwsl_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cwsl_reconstruction_to_json(r: *const CwslReconstruction, out: *mut *mut c_char) -> CwslStatus {
    guard(|| {
        out!(out);
        let r = ptr!(r);
        emit_string(out, core!(io::to_json(&r.file)))
    })
}

/// # Safety
/// `r` is null or a live reconstruction handle.
#[no_mangle]
pub unsafe extern "C" fn cwsl_reconstruction_free(r: *mut CwslReconstruction) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
