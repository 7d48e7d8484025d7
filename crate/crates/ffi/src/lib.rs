//! C interface. Objects cross the boundary as opaque handles created by
//! `*_new`/`*_load` functions and released with the matching `*_free`.
//! Every fallible call returns a `TiStatus`; the message of the last
//! failure on the calling thread is available from `ti_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use transport_inverse::dataset::{GenConfig, ProblemId};
use transport_inverse::mlp::{self, MlpModel};
use transport_inverse::quadrature::{build_gauss_legendre, AngularQuadrature};
use transport_inverse::verification::{self, VerifyConfig};
use transport_inverse::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Numeric = 4,
    Convergence = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiProblem {
    Homogeneous = 1,
    Heterogeneous = 2,
}

impl From<TiProblem> for ProblemId {
    fn from(p: TiProblem) -> Self {
        match p {
            TiProblem::Homogeneous => ProblemId::Homogeneous,
            TiProblem::Heterogeneous => ProblemId::Heterogeneous,
        }
    }
}

/// Discretization used to compute detector readings.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiGenConfig {
    pub n_q: usize,
    pub n_x: usize,
    pub t_f: f64,
    pub n_t: usize,
    pub sigma_t: f64,
    pub speed_c: f64,
    pub si_tol: f64,
    pub si_max_iter: usize,
    pub breakpoint: f64,
}

impl From<GenConfig> for TiGenConfig {
    fn from(c: GenConfig) -> Self {
        Self {
            n_q: c.n_q,
            n_x: c.n_x,
            t_f: c.t_f,
            n_t: c.n_t,
            sigma_t: c.sigma_t,
            speed_c: c.speed_c,
            si_tol: c.si_tol,
            si_max_iter: c.si_max_iter,
            breakpoint: c.breakpoint,
        }
    }
}

impl From<TiGenConfig> for GenConfig {
    fn from(c: TiGenConfig) -> Self {
        Self {
            n_q: c.n_q,
            n_x: c.n_x,
            t_f: c.t_f,
            n_t: c.n_t,
            sigma_t: c.sigma_t,
            speed_c: c.speed_c,
            si_tol: c.si_tol,
            si_max_iter: c.si_max_iter,
            breakpoint: c.breakpoint,
        }
    }
}

/// Gauss-Legendre node set.
pub struct TiQuadrature(AngularQuadrature);

/// Trained network.
pub struct TiModel(MlpModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> TiStatus {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Schema(_) => TiStatus::InvalidArgument,
        Error::Numeric(_) | Error::TrainingDiverged { .. } | Error::UndefinedR2 { .. } => TiStatus::Numeric,
        Error::Convergence { .. } => TiStatus::Convergence,
        Error::Parse { .. } | Error::Json(_) => TiStatus::Parse,
        Error::Io(_) => TiStatus::Io,
    }
}

fn fail(status: TiStatus, msg: impl Into<String>) -> TiStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording its error message and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), TiStatus>) -> TiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TiStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(TiStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: transport_inverse::Result<T>) -> Result<T, TiStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize) -> Result<&'a [f64], TiStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(TiStatus::NullPointer, "input array is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(values: &[f64], out: *mut f64, out_len: usize) -> Result<(), TiStatus> {
    if out_len < values.len() {
        return Err(fail(
            TiStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(fail(TiStatus::NullPointer, "output array is null"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn str_in<'a>(p: *const c_char) -> Result<&'a str, TiStatus> {
    if p.is_null() {
        return Err(fail(TiStatus::NullPointer, "string is null"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(TiStatus::InvalidArgument, "string is not UTF-8"))
}

fn null_check<T>(p: *const T, what: &str) -> Result<(), TiStatus> {
    if p.is_null() {
        Err(fail(TiStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ti_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default dataset-generation settings.
#[no_mangle]
pub extern "C" fn ti_gen_config_default() -> TiGenConfig {
    GenConfig::default().into()
}

/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn ti_quadrature_new(n_q: usize, out: *mut *mut TiQuadrature) -> TiStatus {
    guard(|| {
        null_check(out, "out")?;
        let q = lift(build_gauss_legendre(n_q))?;
        *out = Box::into_raw(Box::new(TiQuadrature(q)));
        Ok(())
    })
}

/// # Safety
/// `q` must be NULL or a handle from `ti_quadrature_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ti_quadrature_free(q: *mut TiQuadrature) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Number of directions, or 0 for a NULL handle.
///
/// # Safety
/// `q` must be NULL or a live quadrature handle.
#[no_mangle]
pub unsafe extern "C" fn ti_quadrature_len(q: *const TiQuadrature) -> usize {
    q.as_ref().map_or(0, |q| q.0.len())
}

/// Copies nodes and weights (ascending nodes) into caller buffers of length `len`.
///
/// # Safety
/// `q` must be a live handle; `nodes` and `weights` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ti_quadrature_copy(
    q: *const TiQuadrature,
    nodes: *mut f64,
    weights: *mut f64,
    len: usize,
) -> TiStatus {
    guard(|| {
        null_check(q, "quadrature")?;
        let q = &(*q).0;
        copy_out(q.nodes(), nodes, len)?;
        copy_out(q.weights(), weights, len)
    })
}

/// Boundary detector readings for absorption coefficients `kappa` (1 value for
/// the homogeneous problem, 2 for the heterogeneous one). Writes
/// 2 or 4 values to `out`, in dataset column order.
///
/// # Safety
/// `config` must point to a valid config, `kappa` to `n_kappa` doubles and
/// `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ti_detector_readings(
    config: *const TiGenConfig,
    problem: TiProblem,
    kappa: *const f64,
    n_kappa: usize,
    out: *mut f64,
    out_len: usize,
) -> TiStatus {
    guard(|| {
        null_check(config, "config")?;
        let cfg: GenConfig = (*config).into();
        let id: ProblemId = problem.into();
        let kappa = slice_in(kappa, n_kappa)?;
        if kappa.len() != id.n_targets() {
            return Err(fail(
                TiStatus::InvalidArgument,
                format!("{id} problem takes {} coefficients, got {}", id.n_targets(), kappa.len()),
            ));
        }
        let quad = lift(build_gauss_legendre(cfg.n_q))?;
        let readings = lift(cfg.detectors(id, kappa, &quad))?;
        copy_out(&readings, out, out_len)
    })
}

/// Manufactured-solution run at `t_f = 1`: scalar flux at x = 0, 0.5, 1 into
/// `psi[3]` and the relative L2 error over all nodes into `eps_rel`.
///
/// # Safety
/// `psi` must hold 3 doubles and `eps_rel` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ti_manufactured_run(
    kappa: f64,
    n_x: usize,
    n_t: usize,
    n_q: usize,
    psi: *mut f64,
    eps_rel: *mut f64,
) -> TiStatus {
    guard(|| {
        null_check(eps_rel, "eps_rel")?;
        let cfg = VerifyConfig { n_x, n_t, n_q, ..Default::default() };
        let row = lift(verification::run_case(kappa, &cfg))?;
        copy_out(&row.psi, psi, 3)?;
        *eps_rel = row.eps_rel;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn ti_model_load(path: *const c_char, out: *mut *mut TiModel) -> TiStatus {
    guard(|| {
        null_check(out, "out")?;
        let path = str_in(path)?;
        let m = lift(mlp::load_model(Path::new(path)))?;
        *out = Box::into_raw(Box::new(TiModel(m)));
        Ok(())
    })
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn ti_model_from_json(json: *const c_char, out: *mut *mut TiModel) -> TiStatus {
    guard(|| {
        null_check(out, "out")?;
        let text = str_in(json)?;
        let m = lift(MlpModel::from_json(text))?;
        *out = Box::into_raw(Box::new(TiModel(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a model handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ti_model_free(m: *mut TiModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ti_model_input_dim(m: *const TiModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.input_dim())
}

/// # Safety
/// `m` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ti_model_output_dim(m: *const TiModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.output_dim())
}

/// Forward pass on one input vector.
///
/// # Safety
/// `m` must be a live handle, `input` must hold `n_input` doubles and
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ti_model_predict(
    m: *const TiModel,
    input: *const f64,
    n_input: usize,
    out: *mut f64,
    out_len: usize,
) -> TiStatus {
    guard(|| {
        null_check(m, "model")?;
        let input = slice_in(input, n_input)?;
        let y = lift((*m).0.forward(input))?;
        copy_out(&y, out, out_len)
    })
}
