//! C ABI over `slzeros`.
//!
//! Every function returns an [`SlzStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`slz_last_error`]. Handles are opaque and must be released with their
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use slzeros::eigen::{solve_basis_pair, BasisPair, EigenBasis, SolverOptions};
use slzeros::ensembles::{ProcessKind, RandomProcess};
use slzeros::harness::{Experiment, ExperimentConfig};
use slzeros::kernels::{kac_rice_stationary_closed, kac_rice_warped_closed, r_n_closed};
use slzeros::rng::sample_coefficients;
use slzeros::weight::{builtin_weight_with, LiouvilleMap, WeightFunction, DEFAULT_EXPCOS_A, TWO_PI};
use slzeros::zeros::{count_zeros, CountOptions};
use slzeros::Error;

/// Points of the Liouville table built with each weight handle.
const MAP_POINTS: usize = 8192;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    Numeric = 5,
    Precondition = 6,
    Invariant = 7,
    Io = 8,
    Panic = 9,
}

/// Eigenfunction family: `C` (cosine-like) or `D` (sine-like).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlzFamily {
    C = 0,
    D = 1,
}

/// A weight preset with its tabulated Liouville map.
pub struct SlzWeight {
    weight: WeightFunction,
    map: Arc<LiouvilleMap>,
}

/// Both eigenfunction families of one weight.
pub struct SlzBasis {
    basis: Arc<BasisPair>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SlzStatus {
    match err {
        Error::Config(_) => SlzStatus::Config,
        Error::Domain(_) => SlzStatus::Domain,
        Error::Numeric(_) => SlzStatus::Numeric,
        Error::Precondition(_) => SlzStatus::Precondition,
        Error::Invariant(_) => SlzStatus::Invariant,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => SlzStatus::Io,
    }
}

struct Fail(SlzStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> SlzStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlzStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SlzStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SlzStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SlzStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

fn family(basis: &BasisPair, f: SlzFamily) -> &EigenBasis {
    match f {
        SlzFamily::C => &basis.cos_family,
        SlzFamily::D => &basis.sin_family,
    }
}

fn check_index(basis: &EigenBasis, k: usize) -> Result<(), Fail> {
    if k == 0 || k > basis.len() {
        return Err(Fail(
            SlzStatus::InvalidArgument,
            format!("index {k} outside 1..={}", basis.len()),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn slz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a weight from a preset name (`unit`, `sine2`, `expcos`).
/// `expcos_a` is used only by `expcos`; pass NaN for the default.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_weight_new(name: *const c_char, expcos_a: f64, out: *mut *mut SlzWeight) -> SlzStatus {
    guard(|| {
        let name = string(name, "name")?;
        let a = if expcos_a.is_nan() { DEFAULT_EXPCOS_A } else { expcos_a };
        let weight = builtin_weight_with(name, a)?;
        let map = Arc::new(LiouvilleMap::new(&weight, MAP_POINTS)?);
        write(out, Box::into_raw(Box::new(SlzWeight { weight, map })), "out")
    })
}

/// # Safety
/// `w` must come from [`slz_weight_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn slz_weight_free(w: *mut SlzWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// `ω(x)`.
///
/// # Safety
/// `w` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_weight_eval(w: *const SlzWeight, x: f64, out: *mut f64) -> SlzStatus {
    guard(|| {
        let w = deref(w, "w")?;
        write(out, w.weight.eval(x), "out")
    })
}

/// `Ω(x) = ∫₀^x ω` for `x` in `[0, 2π]`.
///
/// # Safety
/// `w` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_omega(w: *const SlzWeight, x: f64, out: *mut f64) -> SlzStatus {
    guard(|| {
        let w = deref(w, "w")?;
        write(out, w.map.omega_cumulative(x)?, "out")
    })
}

/// `Ω⁻¹(y)` for `y` in `[0, 2π]`.
///
/// # Safety
/// `w` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_omega_inverse(w: *const SlzWeight, y: f64, out: *mut f64) -> SlzStatus {
    guard(|| {
        let w = deref(w, "w")?;
        write(out, w.map.omega_inverse(y)?, "out")
    })
}

/// Solves both families up to `k_max` on `grid_points` nodes (0 for the
/// default).
///
/// # Safety
/// `w` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_basis_solve(
    w: *const SlzWeight,
    k_max: usize,
    grid_points: usize,
    out: *mut *mut SlzBasis,
) -> SlzStatus {
    guard(|| {
        let w = deref(w, "w")?;
        let mut opts = SolverOptions::default();
        if grid_points != 0 {
            opts.grid_points = grid_points;
        }
        let basis = Arc::new(solve_basis_pair(&w.weight, k_max, &opts)?);
        write(out, Box::into_raw(Box::new(SlzBasis { basis })), "out")
    })
}

/// # Safety
/// `b` must come from [`slz_basis_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn slz_basis_free(b: *mut SlzBasis) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Eigenpairs per family.
///
/// # Safety
/// `b` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_basis_len(b: *const SlzBasis, out: *mut usize) -> SlzStatus {
    guard(|| {
        let b = deref(b, "b")?;
        write(out, b.basis.len(), "out")
    })
}

/// Eigenvalue `λ_k`, `k ≥ 1`.
///
/// # Safety
/// `b` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_basis_eigenvalue(
    b: *const SlzBasis,
    fam: SlzFamily,
    k: usize,
    out: *mut f64,
) -> SlzStatus {
    guard(|| {
        let basis = family(&deref(b, "b")?.basis, fam);
        check_index(basis, k)?;
        write(out, basis.pair(k).eigenvalue, "out")
    })
}

/// `ψ_k(x)` and `ψ′_k(x)` in the original variable.
///
/// # Safety
/// `b` must be a live handle; `value` and `deriv` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_basis_eval(
    b: *const SlzBasis,
    fam: SlzFamily,
    k: usize,
    x: f64,
    value: *mut f64,
    deriv: *mut f64,
) -> SlzStatus {
    guard(|| {
        let basis = family(&deref(b, "b")?.basis, fam);
        check_index(basis, k)?;
        if !(0.0..=TWO_PI).contains(&x) {
            return Err(Fail(SlzStatus::Domain, format!("x = {x} outside [0, 2π]")));
        }
        let (v, d) = basis.eval_psi(k, x);
        write(value, v, "value")?;
        write(deriv, d, "deriv")
    })
}

/// `r_n(t) = (1/n) Σ cos(kt)` and its first two derivatives, written to
/// `out[0..3]`.
///
/// # Safety
/// `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn slz_r_n(n: usize, t: f64, out: *mut f64) -> SlzStatus {
    guard(|| {
        if n == 0 {
            return Err(Fail(SlzStatus::InvalidArgument, "n must be at least 1".into()));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let (r, r1, r2) = r_n_closed(n, t);
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[r, r1, r2]);
        Ok(())
    })
}

/// Closed-form expected zero count on `[0, 2π]` of `X_n` (`stationary` = 0)
/// or of `T_n` (`stationary` ≠ 0).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slz_kac_rice(n: usize, stationary: i32, out: *mut f64) -> SlzStatus {
    guard(|| {
        if n == 0 {
            return Err(Fail(SlzStatus::InvalidArgument, "n must be at least 1".into()));
        }
        let v = if stationary != 0 {
            kac_rice_stationary_closed(n)
        } else {
            kac_rice_warped_closed(n)
        };
        write(out, v, "out")
    })
}

/// Zeros on `[0, 2π]` of one replicate of `X_n` for weight `w` (or of `T_n`
/// when `w` is NULL), drawn from `(master_seed, n, replicate_id)`.
///
/// # Safety
/// `w` must be NULL or a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_count_zeros(
    w: *const SlzWeight,
    master_seed: u64,
    n: usize,
    replicate_id: u64,
    out: *mut usize,
) -> SlzStatus {
    guard(|| {
        let draw = Arc::new(sample_coefficients(master_seed, n, replicate_id)?);
        let opts = CountOptions {
            refine: false,
            ..CountOptions::default()
        };
        let full = (0.0, TWO_PI);
        let count = match w.as_ref() {
            Some(w) => {
                let p = RandomProcess::warped(draw, w.map.clone());
                count_zeros(&p.liouville()?, full, ProcessKind::Warped.n_hint(n), &opts).count
            }
            None => {
                let p = RandomProcess::stationary(draw);
                count_zeros(&p, full, ProcessKind::Stationary.n_hint(n), &opts).count
            }
        };
        write(out, count, "out")
    })
}

/// Runs a simulation described by a TOML experiment config and writes the
/// records CSV to `records_path`. `replicates_out` receives the number of
/// records written.
///
/// # Safety
/// Both strings must be NUL-terminated; `replicates_out` writable.
#[no_mangle]
pub unsafe extern "C" fn slz_simulate(
    config_toml: *const c_char,
    records_path: *const c_char,
    replicates_out: *mut usize,
) -> SlzStatus {
    guard(|| {
        let text = string(config_toml, "config_toml")?;
        let path = string(records_path, "records_path")?;
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Fail(SlzStatus::Config, format!("configuration error: {e}")))?;
        let records = Experiment::prepare(config)?.run(Some(Path::new(path)))?;
        write(replicates_out, records.len(), "replicates_out")
    })
}
