//! C ABI over the core library. Handles are opaque, every fallible entry
//! point returns a status code, and all results are copied out through
//! caller-owned pointers. No call unwinds across the boundary; failures
//! leave a message readable with `tof_last_error`.

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use tofwave::gridw::{weighted_norm, Grid, WeightedNormSpec};
use tofwave::model::{solve_rest_state, validate_assumptions, ModelParams, RestState};
use tofwave::profile::{
    profile_derivative, solve_profile, ProfileProblem, SolveOptions, WaveProfile,
};
use tofwave::spectral::assemble_l;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TofStatus {
    Ok = 0,
    /// a required pointer argument was NULL
    NullArgument = 1,
    /// arguments outside the supported domain (see `tof_last_error`)
    InvalidInput = 2,
    /// the numerical solve did not converge (see `tof_last_error`)
    SolveFailed = 3,
    /// an internal invariant broke; the handle state is unspecified
    Panicked = 4,
}

/// Model coefficients together with the solved homogeneous rest state.
pub struct TofModel {
    params: ModelParams,
    rest: RestState,
}

/// A solved traveling front on its grid.
pub struct TofProfile {
    profile: WaveProfile,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn guarded<F: FnOnce() -> TofStatus>(f: F) -> TofStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TofStatus::Panicked
        }
    }
}

/// Static name of a status code; never NULL, do not free.
#[no_mangle]
pub extern "C" fn tof_status_name(status: TofStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        TofStatus::Ok => b"ok\0",
        TofStatus::NullArgument => b"null argument\0",
        TofStatus::InvalidInput => b"invalid input\0",
        TofStatus::SolveFailed => b"solve failed\0",
        TofStatus::Panicked => b"internal panic\0",
    };
    name.as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `cap`). Returns the size the full message
/// needs, including the terminator; call again with a larger buffer if
/// the return value exceeds `cap`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be NULL to query the size.
#[no_mangle]
pub unsafe extern "C" fn tof_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

unsafe fn hand_out<T>(out: *mut *mut T, value: T) -> TofStatus {
    if out.is_null() {
        set_error("output handle pointer is NULL");
        return TofStatus::NullArgument;
    }
    *out = Box::into_raw(Box::new(value));
    TofStatus::Ok
}

unsafe fn build_model(params: ModelParams, out: *mut *mut TofModel) -> TofStatus {
    match solve_rest_state(&params) {
        Ok(rest) => hand_out(out, TofModel { params, rest }),
        Err(e) => {
            set_error(e.to_string());
            TofStatus::SolveFailed
        }
    }
}

/// Creates the shipped default coefficient set with its rest state.
///
/// # Safety
/// `out` must be a valid pointer; the handle must be released with
/// `tof_model_free`.
#[no_mangle]
pub unsafe extern "C" fn tof_model_default(out: *mut *mut TofModel) -> TofStatus {
    guarded(|| build_model(ModelParams::default_set(), out))
}

/// Creates a model from quintic coefficients alpha, beta0, beta2, beta4
/// (real and imaginary parts) and solves its rest state.
///
/// # Safety
/// `out` must be a valid pointer; the handle must be released with
/// `tof_model_free`.
#[no_mangle]
pub unsafe extern "C" fn tof_model_quintic(
    alpha_re: f64,
    alpha_im: f64,
    beta0_re: f64,
    beta0_im: f64,
    beta2_re: f64,
    beta2_im: f64,
    beta4_re: f64,
    beta4_im: f64,
    out: *mut *mut TofModel,
) -> TofStatus {
    guarded(|| {
        let params = ModelParams::quintic(
            Complex64::new(alpha_re, alpha_im),
            Complex64::new(beta0_re, beta0_im),
            Complex64::new(beta2_re, beta2_im),
            Complex64::new(beta4_re, beta4_im),
        );
        build_model(params, out)
    })
}

/// Releases a model handle; NULL is a no-op.
///
/// # Safety
/// `model` must have come from a `tof_model_*` constructor and not been
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn tof_model_free(model: *mut TofModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Copies the rest-state invariants: squared modulus, rotation frequency
/// and the two linearization slopes. Any output pointer may be NULL to
/// skip that value.
///
/// # Safety
/// `model` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tof_model_rest_state(
    model: *const TofModel,
    r_inf: *mut f64,
    omega: *mut f64,
    sigma1: *mut f64,
    sigma2: *mut f64,
) -> TofStatus {
    guarded(|| {
        if model.is_null() {
            set_error("model handle is NULL");
            return TofStatus::NullArgument;
        }
        let rest = &(*model).rest;
        for (ptr, value) in [
            (r_inf, rest.r_inf),
            (omega, rest.omega),
            (sigma1, rest.sigma1),
            (sigma2, rest.sigma2),
        ] {
            if !ptr.is_null() {
                *ptr = value;
            }
        }
        TofStatus::Ok
    })
}

/// Writes whether the model satisfies the standing sign conditions
/// (diffusion, rest-state damping, combined damping).
///
/// # Safety
/// `model` must be a live handle and `pass` writable.
#[no_mangle]
pub unsafe extern "C" fn tof_model_assumptions_pass(
    model: *const TofModel,
    pass: *mut bool,
) -> TofStatus {
    guarded(|| {
        if model.is_null() || pass.is_null() {
            set_error("NULL argument");
            return TofStatus::NullArgument;
        }
        let m = &*model;
        *pass = validate_assumptions(&m.params, &m.rest).all_pass();
        TofStatus::Ok
    })
}

/// Solves the traveling front on [-half_width, half_width] with n grid
/// points. The returned handle owns the profile.
///
/// # Safety
/// `model` must be a live handle and `out` valid; release the result with
/// `tof_profile_free`.
#[no_mangle]
pub unsafe extern "C" fn tof_profile_solve(
    model: *const TofModel,
    half_width: f64,
    n: usize,
    out: *mut *mut TofProfile,
) -> TofStatus {
    guarded(|| {
        if model.is_null() {
            set_error("model handle is NULL");
            return TofStatus::NullArgument;
        }
        let m = &*model;
        let grid = match Grid::new(half_width, n) {
            Ok(g) => g,
            Err(e) => {
                set_error(e.to_string());
                return TofStatus::InvalidInput;
            }
        };
        let problem = ProfileProblem::new(m.params.clone(), m.rest.clone(), grid);
        match solve_profile(&problem, None, &SolveOptions::default()) {
            Ok(profile) => hand_out(out, TofProfile { profile }),
            Err(e) => {
                set_error(e.to_string());
                TofStatus::SolveFailed
            }
        }
    })
}

/// Releases a profile handle; NULL is a no-op.
///
/// # Safety
/// `profile` must have come from `tof_profile_solve` and not been freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn tof_profile_free(profile: *mut TofProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Copies the solved front's scalars: speed, frame rotation frequency,
/// final Newton residual, and the fitted tail decay rates (NaN when a tail
/// could not be resolved). Any output pointer may be NULL to skip.
///
/// # Safety
/// `profile` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tof_profile_scalars(
    profile: *const TofProfile,
    speed: *mut f64,
    omega: *mut f64,
    residual: *mut f64,
    left_rate: *mut f64,
    right_rate: *mut f64,
) -> TofStatus {
    guarded(|| {
        if profile.is_null() {
            set_error("profile handle is NULL");
            return TofStatus::NullArgument;
        }
        let p = &(*profile).profile;
        for (ptr, value) in [
            (speed, p.c),
            (omega, p.omega),
            (residual, p.residual_norm),
            (left_rate, p.tail_rates.left.unwrap_or(f64::NAN)),
            (right_rate, p.tail_rates.right.unwrap_or(f64::NAN)),
        ] {
            if !ptr.is_null() {
                *ptr = value;
            }
        }
        TofStatus::Ok
    })
}

/// Writes the grid extent and point count of a solved profile.
///
/// # Safety
/// `profile` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tof_profile_grid(
    profile: *const TofProfile,
    half_width: *mut f64,
    n: *mut usize,
) -> TofStatus {
    guarded(|| {
        if profile.is_null() {
            set_error("profile handle is NULL");
            return TofStatus::NullArgument;
        }
        let grid = (*profile).profile.grid;
        if !half_width.is_null() {
            *half_width = grid.half_width;
        }
        if !n.is_null() {
            *n = grid.n;
        }
        TofStatus::Ok
    })
}

/// Copies the front's two field components into caller arrays of length
/// `len`, which must equal the grid point count.
///
/// # Safety
/// `profile` must be a live handle; `re` and `im` must each point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tof_profile_values(
    profile: *const TofProfile,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> TofStatus {
    guarded(|| {
        if profile.is_null() || re.is_null() || im.is_null() {
            set_error("NULL argument");
            return TofStatus::NullArgument;
        }
        let v = &(*profile).profile.v_star;
        if len != v.len() {
            set_error(format!("buffer length {len} does not match grid size {}", v.len()));
            return TofStatus::InvalidInput;
        }
        for (j, u) in v.iter().enumerate() {
            *re.add(j) = u[0];
            *im.add(j) = u[1];
        }
        TofStatus::Ok
    })
}

/// Measures how well the profile derivative spans the kernel of the
/// linearization: the relative L2 residual of applying the operator to it.
///
/// # Safety
/// `profile` and `model` must be live handles built from the same
/// coefficients; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tof_profile_kernel_residual(
    profile: *const TofProfile,
    model: *const TofModel,
    out: *mut f64,
) -> TofStatus {
    guarded(|| {
        if profile.is_null() || model.is_null() || out.is_null() {
            set_error("NULL argument");
            return TofStatus::NullArgument;
        }
        let p = &(*profile).profile;
        let m = &*model;
        let op = assemble_l(p, &m.params);
        let vx = profile_derivative(p);
        let spec = WeightedNormSpec::l2(0.0);
        let num = match weighted_norm(&op.apply(&vx), spec, &p.grid) {
            Ok(x) => x,
            Err(e) => {
                set_error(e.to_string());
                return TofStatus::InvalidInput;
            }
        };
        let den = weighted_norm(&vx, spec, &p.grid).unwrap_or(f64::NAN);
        *out = num / den;
        TofStatus::Ok
    })
}
