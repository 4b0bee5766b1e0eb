use std::ffi::{CStr, CString};
use std::ptr;

use cwsl_ffi::*;

fn problem(json: &str) -> Result<*mut CwslProblem, (CwslStatus, String)> {
    let text = CString::new(json).unwrap();
    let mut p = ptr::null_mut();
    let status = unsafe { cwsl_problem_from_json(text.as_ptr(), &mut p) };
    if status == CwslStatus::Ok {
        Ok(p)
    } else {
        Err((status, last_error()))
    }
}

fn last_error() -> String {
    let p = cwsl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const NEUMANN: &str = r#"{"schema_version": 1, "mode": "relaxed", "problem": {
    "T": 1.0, "b": 0.5, "q": {"expression": "zero"},
    "a1": [1, 0], "a2": [1, 0], "h": [0, 0], "H": [0, 0], "d1": [1, 0], "d2": [0, 0]}}"#;

fn layered_zero() -> String {
    let (c1, s1) = (1.2f64.cos(), 1.2f64.sin());
    let (c3, s3) = (0.3f64.cos(), 0.3f64.sin());
    format!(
        r#"{{"schema_version": 1, "mode": "strict", "problem": {{
        "T": 1.5, "b": 0.6, "q": {{"expression": "zero"}},
        "a1": [{c1}, {s1}], "a2": [1.1, 0], "h": [0, 0], "H": [0, 0], "d1": [{c3}, {s3}], "d2": [0, 0]}}}}"#
    )
}

#[test]
fn neumann_eigenvalues_through_the_c_interface() {
    let p = problem(NEUMANN).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { cwsl_forward(p, 6, 0, &mut s) }, CwslStatus::Ok, "{}", last_error());
    let n = unsafe { cwsl_spectrum_len(s) };
    assert_eq!(n, 6);
    for i in 0..n {
        let mut e = CwslEigenvalue::default();
        assert_eq!(unsafe { cwsl_spectrum_get(s, i, &mut e) }, CwslStatus::Ok);
        let want = (e.k as f64 * std::f64::consts::PI).powi(2);
        assert!((e.lambda_re - want).abs() <= 1e-8 * want.max(1.0) && e.lambda_im.abs() < 1e-8, "{e:?}");
    }
    let mut e = CwslEigenvalue::default();
    assert_eq!(unsafe { cwsl_spectrum_get(s, n, &mut e) }, CwslStatus::OutOfRange);

    // json out and back in gives the same document
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { cwsl_spectrum_to_json(s, &mut json) }, CwslStatus::Ok);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { cwsl_spectrum_from_json(json, &mut again) }, CwslStatus::Ok, "{}", last_error());
    let mut json2 = ptr::null_mut();
    assert_eq!(unsafe { cwsl_spectrum_to_json(again, &mut json2) }, CwslStatus::Ok);
    unsafe {
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(json2));
        cwsl_string_free(json);
        cwsl_string_free(json2);
    }

    // relaxed spectra are not invertible
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cwsl_invert(s, 0, 0, ptr::null(), &mut r) }, CwslStatus::Input);
    assert!(last_error().starts_with("StrictModeRequired"));
    assert!(r.is_null());
    unsafe {
        cwsl_spectrum_free(again);
        cwsl_spectrum_free(s);
        cwsl_problem_free(p);
    }
}

#[test]
fn model_spectrum_inverts_to_zero() {
    let p = problem(&layered_zero()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { cwsl_forward(p, 24, 0, &mut s) }, CwslStatus::Ok, "{}", last_error());
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cwsl_invert(s, 20, 31, p, &mut r) }, CwslStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { cwsl_reconstruction_len(r) }, 31);
    for i in 0..31 {
        let (mut x, mut re, mut im) = (0.0, 0.0, 0.0);
        assert_eq!(unsafe { cwsl_reconstruction_q(r, i, &mut x, &mut re, &mut im) }, CwslStatus::Ok);
        assert!((x - 1.5 * i as f64 / 30.0).abs() < 1e-12);
        assert!(re.hypot(im) <= 1e-6);
    }
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { cwsl_reconstruction_to_json(r, &mut json) }, CwslStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"constants_supplied\": true"));
    unsafe {
        cwsl_string_free(json);
        cwsl_reconstruction_free(r);
        cwsl_spectrum_free(s);
        cwsl_problem_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut strict = NEUMANN.replace("relaxed", "strict");
    let (status, msg) = problem(&strict).unwrap_err();
    assert_eq!(status, CwslStatus::Input);
    assert!(msg.starts_with("RegularityViolation"), "{msg}");

    strict = NEUMANN.replace("\"schema_version\": 1", "\"schema_version\": 7");
    assert_eq!(problem(&strict).unwrap_err().0, CwslStatus::Input);
    assert_eq!(problem("{").unwrap_err().0, CwslStatus::Input);

    let mut p = ptr::null_mut();
    assert_eq!(unsafe { cwsl_problem_from_json(ptr::null(), &mut p) }, CwslStatus::NullPointer);
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { cwsl_problem_from_json(bad.as_ptr().cast(), &mut p) }, CwslStatus::InvalidUtf8);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { cwsl_forward(ptr::null(), 5, 0, &mut s) }, CwslStatus::NullPointer);
    assert_eq!(unsafe { cwsl_spectrum_len(ptr::null()) }, 0);
    unsafe {
        cwsl_problem_free(ptr::null_mut());
        cwsl_spectrum_free(ptr::null_mut());
        cwsl_reconstruction_free(ptr::null_mut());
        cwsl_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/cwsl.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from cwsl.h");
    }
}
