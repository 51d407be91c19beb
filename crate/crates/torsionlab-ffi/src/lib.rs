//! C ABI over the torsionlab core.
//!
//! Every fallible call returns a [`TlStatus`]; on failure the message is kept
//! per thread and can be read with [`tl_last_error_message`]. Handles are
//! opaque and owned by the caller, who releases them with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use torsionlab::adiabatic::{AxialBc, LatticeOperator};
use torsionlab::gluing;
use torsionlab::model_spectra::{
    analytic_torsion_log, circle_spectrum, cylinder_spectrum, interval_spectrum, torus_spectrum, zeta_log_det, Boundary,
    SpectrumFamily,
};
use torsionlab::Error;

/// Status codes. Validation failures map to `TL_INVALID`, numerical ones to
/// `TL_NUMERICAL`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    TlOk = 0,
    TlNullPointer = 1,
    TlInvalid = 2,
    TlNumerical = 3,
    TlPanic = 4,
}

/// Boundary condition at the ends of an interval or cylinder.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlBoundary {
    TlClosed = 0,
    TlAbsolute = 1,
    TlRelative = 2,
}

/// Opaque spectrum of a model Laplacian.
pub struct TlSpectrum {
    inner: SpectrumFamily,
}

/// Opaque lattice Laplacian on a twisted cylinder.
pub struct TlLattice {
    inner: LatticeOperator,
}

/// One evaluation of the gluing formula.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TlGluingReport {
    pub l: f64,
    pub r: f64,
    pub alpha: f64,
    pub log_t_z: f64,
    pub log_t_abs: f64,
    pub log_t_rel: f64,
    pub t_f: f64,
    pub euler_term: f64,
    pub residual: f64,
    pub error_budget: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: Error) -> TlStatus {
    let code = if e.is_validation() { TlStatus::TlInvalid } else { TlStatus::TlNumerical };
    set_error(e.to_string());
    code
}

fn guard<F: FnOnce() -> Result<(), TlStatus>>(f: F) -> TlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TlStatus::TlOk,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            TlStatus::TlPanic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), TlStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(TlStatus::TlNullPointer)
    } else {
        Ok(())
    }
}

fn boundary(b: TlBoundary) -> Boundary {
    match b {
        TlBoundary::TlClosed => Boundary::Closed,
        TlBoundary::TlAbsolute => Boundary::Absolute,
        TlBoundary::TlRelative => Boundary::Relative,
    }
}

unsafe fn emit_spectrum(out: *mut *mut TlSpectrum, s: torsionlab::Result<SpectrumFamily>) -> Result<(), TlStatus> {
    non_null(out, "out")?;
    let s = s.map_err(status_of)?;
    *out = Box::into_raw(Box::new(TlSpectrum { inner: s }));
    Ok(())
}

/// Copies the last error message of this thread into `buf` (nul-terminated,
/// truncated to `len`). Returns the full message length without the nul, or
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn tl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Spectrum of the circle of length `l` twisted by `alpha`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_circle(l: f64, alpha: f64, out: *mut *mut TlSpectrum) -> TlStatus {
    guard(|| emit_spectrum(out, circle_spectrum(l, alpha)))
}

/// Spectrum of the interval of length `l`; `bc` must not be closed.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_interval(l: f64, bc: TlBoundary, out: *mut *mut TlSpectrum) -> TlStatus {
    guard(|| emit_spectrum(out, interval_spectrum(l, boundary(bc))))
}

/// Spectrum of the flat cylinder (circle of length `ly`, twist `alpha`) times
/// an interval of length `a`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_cylinder(
    ly: f64,
    alpha: f64,
    a: f64,
    bc: TlBoundary,
    out: *mut *mut TlSpectrum,
) -> TlStatus {
    guard(|| emit_spectrum(out, cylinder_spectrum(ly, alpha, a, boundary(bc))))
}

/// Spectrum of the twisted flat torus.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_torus(ly: f64, alpha: f64, lx: f64, out: *mut *mut TlSpectrum) -> TlStatus {
    guard(|| emit_spectrum(out, torus_spectrum(ly, alpha, lx)))
}

/// Top form degree of the spectrum.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_dimension(s: *const TlSpectrum) -> usize {
    if s.is_null() {
        0
    } else {
        (*s).inner.degrees.len().saturating_sub(1)
    }
}

/// Zeta-regularized `log det'` in degree `p` with truncation `k`.
///
/// # Safety
/// `s` must be a live handle and `value`, `error` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_log_det(
    s: *const TlSpectrum,
    p: usize,
    k: usize,
    value: *mut f64,
    error: *mut f64,
) -> TlStatus {
    guard(|| {
        non_null(s, "spectrum")?;
        non_null(value, "value")?;
        non_null(error, "error")?;
        let sp = &(*s).inner;
        if p >= sp.degrees.len() {
            return Err(status_of(Error::Invalid(format!("degree {p} out of range"))));
        }
        let r = zeta_log_det(sp, p, k).map_err(status_of)?;
        *value = r.value;
        *error = r.error;
        Ok(())
    })
}

/// Logarithm of the analytic torsion.
///
/// # Safety
/// `s` must be a live handle and `value`, `error` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_log_torsion(
    s: *const TlSpectrum,
    k: usize,
    value: *mut f64,
    error: *mut f64,
) -> TlStatus {
    guard(|| {
        non_null(s, "spectrum")?;
        non_null(value, "value")?;
        non_null(error, "error")?;
        let r = analytic_torsion_log(&(*s).inner, k).map_err(status_of)?;
        *value = r.value;
        *error = r.error;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_spectrum_free(s: *mut TlSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Lattice Laplacian on the twisted cylinder with the given mesh.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_lattice_new(
    mesh: f64,
    ly: f64,
    alpha: f64,
    length: f64,
    bc: TlBoundary,
    out: *mut *mut TlLattice,
) -> TlStatus {
    guard(|| {
        non_null(out, "out")?;
        let bc = match bc {
            TlBoundary::TlClosed => AxialBc::Closed,
            TlBoundary::TlAbsolute => AxialBc::Absolute,
            TlBoundary::TlRelative => AxialBc::Relative,
        };
        let op = LatticeOperator::new(mesh, ly, alpha, length, bc).map_err(status_of)?;
        *out = Box::into_raw(Box::new(TlLattice { inner: op }));
        Ok(())
    })
}

/// Number of numerically zero eigenvalues in `degree`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_lattice_zero_modes(h: *const TlLattice, degree: usize, out: *mut usize) -> TlStatus {
    guard(|| {
        non_null(h, "lattice")?;
        non_null(out, "out")?;
        if degree > 2 {
            return Err(status_of(Error::Invalid(format!("degree {degree} out of range"))));
        }
        *out = (*h).inner.zero_modes(degree);
        Ok(())
    })
}

/// Smallest positive eigenvalue in `degree`; NaN when there is none.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_lattice_min_positive(h: *const TlLattice, degree: usize, out: *mut f64) -> TlStatus {
    guard(|| {
        non_null(h, "lattice")?;
        non_null(out, "out")?;
        if degree > 2 {
            return Err(status_of(Error::Invalid(format!("degree {degree} out of range"))));
        }
        *out = (*h).inner.min_positive(degree).unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_lattice_free(h: *mut TlLattice) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

fn report(r: &gluing::GluingReport) -> TlGluingReport {
    TlGluingReport {
        l: r.l,
        r: r.r,
        alpha: r.alpha,
        log_t_z: r.log_t_z,
        log_t_abs: r.log_t_abs,
        log_t_rel: r.log_t_rel,
        t_f: r.t_f,
        euler_term: r.euler_term,
        residual: r.residual,
        error_budget: r.error_budget,
    }
}

/// Gluing formula for the circle of arc length `l` cut in two.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_glue_circle(l: f64, k: usize, out: *mut TlGluingReport) -> TlStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = report(&gluing::run_circle_gluing(l, k).map_err(status_of)?);
        Ok(())
    })
}

/// Gluing formula for the twisted torus. An integer `alpha` is rejected with
/// `TL_INVALID`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_glue_torus(
    ly: f64,
    alpha: f64,
    a1: f64,
    a2: f64,
    k: usize,
    out: *mut TlGluingReport,
) -> TlStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = report(&gluing::run_torus_gluing(ly, alpha, a1, a2, k).map_err(status_of)?);
        Ok(())
    })
}

/// Analytic and Reidemeister torsion of the twisted circle with `cells` edges.
///
/// # Safety
/// `analytic` and `reidemeister` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tl_cheeger_muller(
    alpha: f64,
    l: f64,
    cells: usize,
    k: usize,
    analytic: *mut f64,
    reidemeister: *mut f64,
) -> TlStatus {
    guard(|| {
        non_null(analytic, "analytic")?;
        non_null(reidemeister, "reidemeister")?;
        let row = gluing::cheeger_muller_check(alpha, l, cells, k).map_err(status_of)?;
        *analytic = row.analytic;
        *reidemeister = row.reidemeister;
        Ok(())
    })
}
