//! C ABI for `cusplab`.
//!
//! Every fallible function returns a [`CusplabStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`cusplab_last_error`] until the next failing call on that
//! thread. Surfaces are opaque handles released with [`cusplab_surface_free`].

use cusplab::geodesic::{geodesic_in_class, FinderOptions};
use cusplab::indicial::{h_closed, pi2_indicial_form, Probe};
use cusplab::metric::PerturbedMetric;
use cusplab::surface::Surface;
use cusplab::{GroupPresentation, LabError, Mobius};
use num_complex::Complex64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes. `0` is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CusplabStatus {
    Ok = 0,
    InvalidInput = 1,
    Domain = 2,
    NotHyperbolic = 3,
    NoConvergence = 4,
    NotPositiveDefinite = 5,
    Quadrature = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

impl From<&LabError> for CusplabStatus {
    fn from(e: &LabError) -> Self {
        match e {
            LabError::InvalidInput(_) => CusplabStatus::InvalidInput,
            LabError::Domain(_) => CusplabStatus::Domain,
            LabError::NotHyperbolic { .. } => CusplabStatus::NotHyperbolic,
            LabError::NoConvergence(_) => CusplabStatus::NoConvergence,
            LabError::NotPositiveDefinite(_) => CusplabStatus::NotPositiveDefinite,
            LabError::Quadrature(_) => CusplabStatus::Quadrature,
            LabError::Io(_) => CusplabStatus::Io,
        }
    }
}

/// Opaque surface handle.
pub struct CusplabSurface {
    inner: Surface,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Lab(LabError),
    Null(&'static str),
}

impl From<LabError> for Fail {
    fn from(e: LabError) -> Self {
        Fail::Lab(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CusplabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CusplabStatus::Ok,
        Ok(Err(Fail::Lab(e))) => {
            let s = CusplabStatus::from(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CusplabStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            CusplabStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Lab(LabError::input(format!("{what} is not UTF-8"))))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn surface<'a>(p: *const CusplabSurface) -> Result<&'a Surface, Fail> {
    p.as_ref().map(|s| &s.inner).ok_or(Fail::Null("surface"))
}

fn height_opt(h: f64) -> Option<f64> {
    (h > 0.0).then_some(h)
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cusplab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cusplab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a preset surface (`"one-cusp-genus-1"`, `"thrice-punctured"`,
/// `"modular-pair"`). A non-positive `cusp_height` selects the default.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cusplab_surface_preset(
    name: *const c_char,
    cusp_height: f64,
    out_surface: *mut *mut CusplabSurface,
) -> CusplabStatus {
    guard(|| {
        let o = out(out_surface, "out_surface")?;
        let s = Surface::preset(text(name, "name")?, height_opt(cusp_height))?;
        *o = Box::into_raw(Box::new(CusplabSurface { inner: s }));
        Ok(())
    })
}

/// Build a surface from `n` generators stored row-major as `[a, b, c, d]`
/// quadruples (`4n` doubles); generators are named a, b, c, …
///
/// # Safety
/// `matrices` must point to `4n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cusplab_surface_from_generators(
    matrices: *const f64,
    n: usize,
    cusp_height: f64,
    out_surface: *mut *mut CusplabSurface,
) -> CusplabStatus {
    guard(|| {
        let o = out(out_surface, "out_surface")?;
        if matrices.is_null() {
            return Err(Fail::Null("matrices"));
        }
        if n == 0 || n > 26 {
            return Err(LabError::input(format!("need 1 to 26 generators, got {n}")).into());
        }
        let m = std::slice::from_raw_parts(matrices, 4 * n);
        let gens = m.chunks(4).map(|g| Mobius::new(g[0], g[1], g[2], g[3])).collect::<Result<Vec<_>, _>>()?;
        let names = (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
        let s = Surface::new(GroupPresentation::new(gens, names)?, height_opt(cusp_height))?;
        *o = Box::into_raw(Box::new(CusplabSurface { inner: s }));
        Ok(())
    })
}

/// Release a surface. Null is ignored.
///
/// # Safety
/// `s` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cusplab_surface_free(s: *mut CusplabSurface) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Cusp width of the surface.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cusplab_surface_width(s: *const CusplabSurface, out_width: *mut f64) -> CusplabStatus {
    guard(|| {
        *out(out_width, "out_width")? = surface(s)?.width;
        Ok(())
    })
}

/// Translation length `2 arccosh(|tr|/2)` of the class of `word`.
///
/// # Safety
/// Pointers must be valid; `word` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn cusplab_trace_length(
    s: *const CusplabSurface,
    word: *const c_char,
    out_length: *mut f64,
) -> CusplabStatus {
    guard(|| {
        let o = out(out_length, "out_length")?;
        let g = &surface(s)?.group;
        let c = g.parse_word(text(word, "word")?)?;
        *o = g.evaluate_word(&c)?.trace_length()?;
        Ok(())
    })
}

/// Length of the closed hyperbolic geodesic in the class, found by the
/// variational finder (default options).
///
/// # Safety
/// Pointers must be valid; `word` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn cusplab_geodesic_length(
    s: *const CusplabSurface,
    word: *const c_char,
    out_length: *mut f64,
) -> CusplabStatus {
    guard(|| {
        let o = out(out_length, "out_length")?;
        let g = &surface(s)?.group;
        let c = g.parse_word(text(word, "word")?)?;
        *o = geodesic_in_class(&PerturbedMetric::hyperbolic(), g, &c, &FinderOptions::default())?.length;
        Ok(())
    })
}

/// `H(ρ) = √π Γ(ρ/2)/Γ((ρ+1)/2)` for `Re ρ > 0`.
///
/// # Safety
/// Out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cusplab_h_closed(re: f64, im: f64, out_re: *mut f64, out_im: *mut f64) -> CusplabStatus {
    guard(|| {
        let (a, b) = (out(out_re, "out_re")?, out(out_im, "out_im")?);
        let h = h_closed(Complex64::new(re, im))?;
        (*a, *b) = (h.re, h.im);
        Ok(())
    })
}

/// Closed form of the Π₂ indicial pairing in dimension `d` at ρ for the
/// probe with coefficient `a` and symmetric `c0` (`d·d` doubles, row-major;
/// null means zero).
///
/// # Safety
/// `c0` must be null or point to `d·d` doubles; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn cusplab_pi2_form(
    d: usize,
    re: f64,
    im: f64,
    a: f64,
    c0: *const f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> CusplabStatus {
    guard(|| {
        let (or, oi) = (out(out_re, "out_re")?, out(out_im, "out_im")?);
        if d == 0 {
            return Err(LabError::input("dimension d must be positive").into());
        }
        let c0 = if c0.is_null() { vec![0.0; d * d] } else { std::slice::from_raw_parts(c0, d * d).to_vec() };
        let probe = Probe { id: "ffi".into(), a, c0 };
        let v = pi2_indicial_form(&probe.at(d, Complex64::new(re, im))?)?;
        (*or, *oi) = (v.re, v.im);
        Ok(())
    })
}
