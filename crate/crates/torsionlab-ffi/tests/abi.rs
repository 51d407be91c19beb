use std::f64::consts::{LN_2, PI};
use std::ffi::{c_char, CStr};
use std::ptr;

use torsionlab_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { tl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if n == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn circle_log_det_through_the_abi() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tl_spectrum_circle(2.0 * PI, 0.0, &mut s) }, TlStatus::TlOk);
    assert_eq!(unsafe { tl_spectrum_dimension(s) }, 1);
    let (mut v, mut e) = (0.0, 0.0);
    assert_eq!(unsafe { tl_spectrum_log_det(s, 0, 10_000, &mut v, &mut e) }, TlStatus::TlOk);
    assert!((v - 2.0 * (2.0 * PI).ln()).abs() < 1e-8, "{v}");
    assert_eq!(unsafe { tl_spectrum_log_det(s, 5, 10_000, &mut v, &mut e) }, TlStatus::TlInvalid);
    assert!(last_error().contains("degree"));
    unsafe { tl_spectrum_free(s) };
}

#[test]
fn twisted_circle_torsion() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tl_spectrum_circle(1.0, 0.25, &mut s) }, TlStatus::TlOk);
    let (mut v, mut e) = (0.0, 0.0);
    assert_eq!(unsafe { tl_spectrum_log_torsion(s, 10_000, &mut v, &mut e) }, TlStatus::TlOk);
    assert!((v - (2.0 * (0.25 * PI).sin()).ln()).abs() < 1e-10);
    unsafe { tl_spectrum_free(s) };
    let (mut a, mut r) = (0.0, 0.0);
    assert_eq!(unsafe { tl_cheeger_muller(0.25, 1.0, 3, 10_000, &mut a, &mut r) }, TlStatus::TlOk);
    assert!((a - r).abs() < 1e-7);
}

#[test]
fn gluing_reports() {
    let mut rep = TlGluingReport::default();
    assert_eq!(unsafe { tl_glue_circle(1.0, 10_000, &mut rep) }, TlStatus::TlOk);
    assert!((rep.t_f + LN_2).abs() < 1e-6);
    assert!(rep.residual.abs() < 1e-6);
    assert_eq!(unsafe { tl_glue_torus(1.0, 1.0, 1.0, 1.0, 10_000, &mut rep) }, TlStatus::TlInvalid);
    assert!(last_error().contains("integer"));
    assert_eq!(unsafe { tl_glue_torus(1.0, 1.5, 1.0, 1.0, 10_000, &mut rep) }, TlStatus::TlOk);
    assert!((rep.log_t_abs - LN_2).abs() < 1e-6);
}

#[test]
fn lattice_handle() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tl_lattice_new(0.1, 1.0, 0.5, 2.0, TlBoundary::TlClosed, &mut h) }, TlStatus::TlOk);
    let mut z = 99usize;
    assert_eq!(unsafe { tl_lattice_zero_modes(h, 1, &mut z) }, TlStatus::TlOk);
    assert_eq!(z, 0);
    let mut m = 0.0;
    assert_eq!(unsafe { tl_lattice_min_positive(h, 0, &mut m) }, TlStatus::TlOk);
    assert!(m > 9.0 && m < PI * PI, "{m}");
    unsafe { tl_lattice_free(h) };
}

#[test]
fn null_and_invalid_arguments() {
    assert_eq!(unsafe { tl_spectrum_circle(1.0, 0.0, ptr::null_mut()) }, TlStatus::TlNullPointer);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tl_spectrum_circle(-1.0, 0.0, &mut s) }, TlStatus::TlInvalid);
    assert!(s.is_null());
    assert!(!last_error().is_empty());
    let mut rep = TlGluingReport::default();
    assert_eq!(unsafe { tl_glue_circle(1.0, 10_000, &mut rep) }, TlStatus::TlOk);
    assert_eq!(last_error(), "");
    unsafe {
        tl_spectrum_free(ptr::null_mut());
        tl_lattice_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(tl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/torsionlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["tl_spectrum_circle", "tl_glue_torus", "tl_lattice_free", "TL_INVALID", "typedef struct TlSpectrum TlSpectrum"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let src = std::env::temp_dir().join(format!("tl_header_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"torsionlab.h\"\nint main(void) { TlGluingReport r; (void)r; return TL_OK; }\n").unwrap();
    match std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found, syntax check skipped"),
    }
    let _ = std::fs::remove_file(src);
}
