use std::ffi::{c_char, CStr, CString};
use std::ptr;

use gaussian_fisher_ffi::*;

const CONFIG: &str = r#"{
  "scenario": "amplifier",
  "params": {"chi": -0.2, "kappa": 1.0},
  "measurement": {"kind": "heterodyne"},
  "grid": {"dt": 0.01, "t_max": 1.0, "output_every": 25},
  "ensemble": {"n_traj": 64, "seed": 1}
}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gf_last_error_message()) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { gf_string_free(p) };
    s
}

fn run(json: &str, workers: u32) -> (GfStatus, *mut GfTable) {
    let c = CString::new(json).unwrap();
    let mut t = ptr::null_mut();
    let s = unsafe { gf_run_config(c.as_ptr(), workers, &mut t) };
    (s, t)
}

#[test]
fn run_and_read_table() {
    let (s, t) = run(CONFIG, 2);
    assert_eq!(s, GfStatus::Ok, "{}", last_error());
    let (mut rows, mut cols) = (0usize, 0usize);
    unsafe {
        assert_eq!(gf_table_rows(t, &mut rows), GfStatus::Ok);
        assert_eq!(gf_table_cols(t, &mut cols), GfStatus::Ok);
    }
    assert_eq!(rows, 5);
    assert!(cols >= 4);

    let name = CString::new("F").unwrap();
    let mut col = usize::MAX;
    assert_eq!(unsafe { gf_table_column_index(t, name.as_ptr(), &mut col) }, GfStatus::Ok);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { gf_table_column_name(t, col, &mut p) }, GfStatus::Ok);
    assert_eq!(take_string(p), "F");

    let mut f0 = f64::NAN;
    let mut f1 = f64::NAN;
    unsafe {
        assert_eq!(gf_table_value(t, 0, col, &mut f0), GfStatus::Ok);
        assert_eq!(gf_table_value(t, rows - 1, col, &mut f1), GfStatus::Ok);
    }
    assert_eq!(f0, 0.0);
    assert!(f1 > 0.0);
    assert_eq!(unsafe { gf_table_value(t, rows, 0, &mut f0) }, GfStatus::OutOfRange);

    let key = CString::new("scenario").unwrap();
    assert_eq!(unsafe { gf_table_meta(t, key.as_ptr(), &mut p) }, GfStatus::Ok);
    assert_eq!(take_string(p), "amplifier");
    unsafe { gf_table_free(t) };
}

#[test]
fn csv_matches_library_output_and_ignores_worker_count() {
    let csv = |workers| {
        let (s, t) = run(CONFIG, workers);
        assert_eq!(s, GfStatus::Ok);
        let mut p = ptr::null_mut();
        assert_eq!(unsafe { gf_table_to_csv(t, &mut p) }, GfStatus::Ok);
        unsafe { gf_table_free(t) };
        take_string(p)
    };
    let direct = gaussian_fisher::runner::run(&gaussian_fisher::config::parse_config(CONFIG).unwrap(), Some(1))
        .unwrap()
        .to_csv();
    assert_eq!(csv(1), direct);
    assert_eq!(csv(3), direct);
    assert_eq!(csv(0), direct);
}

#[test]
fn failures_report_status_and_message() {
    let (s, t) = run(r#"{"scenario": "pendulum", "grid": {"t_max": 1}}"#, 1);
    assert_eq!(s, GfStatus::Config);
    assert!(t.is_null());
    assert!(last_error().contains("pendulum"), "{}", last_error());

    let (s, _) = run(
        r#"{"scenario": "amplifier", "params": {"chi": -400}, "grid": {"dt": 0.01, "t_max": 100}, "mode": "unconditional"}"#,
        1,
    );
    assert_eq!(s, GfStatus::Numerical, "{}", last_error());

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { gf_run_config(ptr::null(), 1, &mut t) }, GfStatus::NullPointer);
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { gf_run_config(bad.as_ptr().cast(), 1, &mut t) }, GfStatus::InvalidUtf8);
    let c = CString::new(CONFIG).unwrap();
    assert_eq!(unsafe { gf_run_config(c.as_ptr(), 1, ptr::null_mut()) }, GfStatus::NullPointer);

    let mut n = 0usize;
    assert_eq!(unsafe { gf_table_rows(ptr::null(), &mut n) }, GfStatus::NullPointer);
    unsafe {
        gf_table_free(ptr::null_mut());
        gf_string_free(ptr::null_mut());
    }
}

#[test]
fn scalar_helpers() {
    let mut v = 0.0;
    assert_eq!(unsafe { gf_crb_bound(4.0, 10, &mut v) }, GfStatus::Ok);
    assert_eq!(v, 1.0 / 40.0);
    assert_eq!(unsafe { gf_crb_bound(0.0, 10, &mut v) }, GfStatus::Ok);
    assert!(v.is_infinite());
    assert_eq!(unsafe { gf_crb_bound(1.0, 0, &mut v) }, GfStatus::InvalidParameter);
    assert_eq!(unsafe { gf_crb_bound(f64::NAN, 1, &mut v) }, GfStatus::InvalidParameter);

    let dm = [1.0, 2.0];
    let sigma = [2.0, 0.0, 0.0, 4.0];
    assert_eq!(unsafe { gf_gaussian_fi(dm.as_ptr(), sigma.as_ptr(), 2, &mut v) }, GfStatus::Ok);
    assert!((v - 1.5).abs() < 1e-14);
    let singular = [1.0, 0.0, 0.0, 0.0];
    assert_eq!(unsafe { gf_gaussian_fi(dm.as_ptr(), singular.as_ptr(), 2, &mut v) }, GfStatus::Numerical);
    assert_eq!(unsafe { gf_gaussian_fi(ptr::null(), sigma.as_ptr(), 2, &mut v) }, GfStatus::NullPointer);

    let version = unsafe { CStr::from_ptr(gf_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gaussian_fisher.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "gf_run_config",
        "gf_table_free",
        "gf_last_error_message",
        "GF_STATUS_NUMERICAL",
        "typedef struct GfTable GfTable",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping compile check");
        return;
    };
    assert!(cc.status.success());
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
