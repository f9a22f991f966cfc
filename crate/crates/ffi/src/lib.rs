//! C ABI over the gemservo toolkit.
//!
//! Every function returns a [`GsStatus`]; results go through out-pointers.
//! On failure, `gs_last_error` gives a message for the calling thread.
//! Objects are opaque handles created by `gs_*_new` and released with the
//! matching `gs_*_free`; passing NULL to a free function is a no-op.
//! Panics never cross the boundary; they surface as `GS_STATUS_PANIC`.
//!
//! # Safety
//!
//! The same contract holds for every `unsafe` entry point. Pointers are
//! NULL (reported as `GS_STATUS_NULL_POINTER`) or valid for the stated
//! length. Handles must come from the matching constructor and must not be
//! used after being freed. Strings are NUL terminated. A handle must not be
//! used from two threads at once.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gemservo::config::{AssetRoot, Overrides, ScenarioFile};
use gemservo::control::{sf_step, Limits, Pid, PidGains, StateFeedbackGains};
use gemservo::kinematics::{self, EffectorPos, JointAngles, MountGeometry};
use gemservo::lti::{DcGain, TransferFunction};
use gemservo::metrics::analyze_step_samples;
use gemservo::simloop::{self, SimTrace};
use gemservo::sysid::{fit_second_order, DataSet};
use gemservo::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Dimension = 4,
    NonFinite = 5,
    ConstantOutput = 6,
    Uncontrollable = 7,
    Unreachable = 8,
    NoSolution = 9,
    Parse = 10,
    Io = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

fn status_of(e: &Error) -> GsStatus {
    match e {
        Error::InvalidModel(_) | Error::Improper { .. } | Error::Degenerate(_) => GsStatus::InvalidModel,
        Error::Dimension(_) => GsStatus::Dimension,
        Error::NonFinite(_) => GsStatus::NonFinite,
        Error::InvalidArgument(_) => GsStatus::InvalidArgument,
        Error::ConstantOutput => GsStatus::ConstantOutput,
        Error::Uncontrollable(_) => GsStatus::Uncontrollable,
        Error::Unreachable { .. } => GsStatus::Unreachable,
        Error::NoSolution(_) => GsStatus::NoSolution,
        Error::Dataset { .. } | Error::Config { .. } => GsStatus::Parse,
        Error::Io { .. } => GsStatus::Io,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(GsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GsStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            GsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GsStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `cap`) and returns its full length in bytes,
/// excluding the terminator. `buf` may be NULL to query the length.
#[no_mangle]
pub unsafe extern "C" fn gs_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---- transfer functions ----

/// Opaque transfer function handle.
pub struct GsTransferFunction(TransferFunction);

/// Coefficients in descending powers of `s`.
#[no_mangle]
pub unsafe extern "C" fn gs_tf_new(
    num: *const f64,
    num_len: usize,
    den: *const f64,
    den_len: usize,
    out_tf: *mut *mut GsTransferFunction,
) -> GsStatus {
    guard(|| {
        let o = out(out_tf, "out_tf")?;
        let tf = TransferFunction::new(slice(num, num_len, "num")?.to_vec(), slice(den, den_len, "den")?.to_vec())?;
        *o = Box::into_raw(Box::new(GsTransferFunction(tf)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gs_tf_free(tf: *mut GsTransferFunction) {
    if !tf.is_null() {
        drop(Box::from_raw(tf));
    }
}

/// Denominator degree.
#[no_mangle]
pub unsafe extern "C" fn gs_tf_order(tf: *const GsTransferFunction, out_order: *mut usize) -> GsStatus {
    guard(|| {
        *out(out_order, "out_order")? = handle(tf, "tf")?.0.order();
        Ok(())
    })
}

/// Steady-state gain; `INFINITY` (signed like the low-frequency gain) for
/// a pole at the origin.
#[no_mangle]
pub unsafe extern "C" fn gs_tf_dc_gain(tf: *const GsTransferFunction, out_gain: *mut f64) -> GsStatus {
    guard(|| {
        let o = out(out_gain, "out_gain")?;
        let tf = &handle(tf, "tf")?.0;
        *o = match tf.dc_gain()? {
            DcGain::Finite(g) => g,
            DcGain::Infinite => {
                let k = tf.system_type();
                let num0 = *tf.num().last().unwrap_or(&1.0);
                let den_k = tf.den()[tf.den().len() - 1 - k];
                f64::INFINITY.copysign(num0 / den_k)
            }
        };
        Ok(())
    })
}

/// Number of poles at the origin.
#[no_mangle]
pub unsafe extern "C" fn gs_tf_system_type(tf: *const GsTransferFunction, out_type: *mut usize) -> GsStatus {
    guard(|| {
        *out(out_type, "out_type")? = handle(tf, "tf")?.0.system_type();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gs_tf_is_bibo_stable(tf: *const GsTransferFunction, out_stable: *mut bool) -> GsStatus {
    guard(|| {
        *out(out_stable, "out_stable")? = handle(tf, "tf")?.0.is_bibo_stable();
        Ok(())
    })
}

/// Writes up to `cap` poles, sorted by real then imaginary part, and the
/// pole count to `out_len`. Fails with `GS_STATUS_BUFFER_TOO_SMALL` (after
/// setting `out_len`) when `cap` is short.
#[no_mangle]
pub unsafe extern "C" fn gs_tf_poles(
    tf: *const GsTransferFunction,
    re: *mut f64,
    im: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> GsStatus {
    guard(|| {
        let len = out(out_len, "out_len")?;
        let poles = handle(tf, "tf")?.0.poles();
        *len = poles.len();
        if cap < poles.len() {
            return Err(Fail(
                GsStatus::BufferTooSmall,
                format!("{} poles, buffer holds {cap}", poles.len()),
            ));
        }
        if poles.is_empty() {
            return Ok(());
        }
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        for (k, p) in poles.iter().enumerate() {
            *re.add(k) = p.re;
            *im.add(k) = p.im;
        }
        Ok(())
    })
}

/// New handle with the denominator multiplied by `s`.
#[no_mangle]
pub unsafe extern "C" fn gs_tf_with_integrator(
    tf: *const GsTransferFunction,
    out_tf: *mut *mut GsTransferFunction,
) -> GsStatus {
    guard(|| {
        let o = out(out_tf, "out_tf")?;
        let aug = handle(tf, "tf")?.0.with_integrator();
        *o = Box::into_raw(Box::new(GsTransferFunction(aug)));
        Ok(())
    })
}

// ---- controllers ----

/// Opaque PID controller with its state.
pub struct GsPid(Pid);

#[no_mangle]
pub unsafe extern "C" fn gs_pid_new(
    kp: f64,
    ki: f64,
    kd: f64,
    deriv_filter_n: f64,
    u_min: f64,
    u_max: f64,
    out_pid: *mut *mut GsPid,
) -> GsStatus {
    guard(|| {
        let o = out(out_pid, "out_pid")?;
        let gains = PidGains::new(kp, ki, kd, deriv_filter_n, Limits::new(u_min, u_max)?)?;
        *o = Box::into_raw(Box::new(GsPid(Pid::new(gains))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gs_pid_free(pid: *mut GsPid) {
    if !pid.is_null() {
        drop(Box::from_raw(pid));
    }
}

/// One sample: writes the raw and saturated commands.
#[no_mangle]
pub unsafe extern "C" fn gs_pid_step(
    pid: *mut GsPid,
    error: f64,
    ts: f64,
    out_u: *mut f64,
    out_u_sat: *mut f64,
) -> GsStatus {
    guard(|| {
        let pid = out(pid, "pid")?;
        let (u, u_sat) = (out(out_u, "out_u")?, out(out_u_sat, "out_u_sat")?);
        let (a, b) = pid.0.step(error, ts)?;
        *u = a;
        *u_sat = b;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gs_pid_reset(pid: *mut GsPid) -> GsStatus {
    guard(|| {
        out(pid, "pid")?.0.reset();
        Ok(())
    })
}

/// Current value of the error integral.
#[no_mangle]
pub unsafe extern "C" fn gs_pid_integral(pid: *const GsPid, out_integral: *mut f64) -> GsStatus {
    guard(|| {
        *out(out_integral, "out_integral")? = handle(pid, "pid")?.0.state().integral;
        Ok(())
    })
}

/// One state-feedback sample. `k1` and `x` have `n` entries in
/// phase-variable order; `xi` is read and updated in place.
#[no_mangle]
pub unsafe extern "C" fn gs_sf_step(
    k1: *const f64,
    n: usize,
    k2: f64,
    x: *const f64,
    xi: *mut f64,
    r: f64,
    y: f64,
    ts: f64,
    u_min: f64,
    u_max: f64,
    out_u: *mut f64,
    out_u_sat: *mut f64,
) -> GsStatus {
    guard(|| {
        let gains = StateFeedbackGains::new(slice(k1, n, "k1")?.to_vec(), k2)?;
        let x = slice(x, n, "x")?;
        let xi = out(xi, "xi")?;
        let (u, u_sat) = (out(out_u, "out_u")?, out(out_u_sat, "out_u_sat")?);
        let res = sf_step(&gains, x, *xi, r, y, ts, &Limits::new(u_min, u_max)?)?;
        *xi = res.xi;
        *u = res.u_command;
        *u_sat = res.u_saturated;
        Ok(())
    })
}

// ---- identification and metrics ----

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GsFitResult {
    /// `b0 / (s^2 + a1 s + a0)`.
    pub b0: f64,
    pub a1: f64,
    pub a0: f64,
    pub fit_pct: f64,
    pub fpe: f64,
    pub mse: f64,
    pub converged: bool,
    pub stable: bool,
}

/// Fits a second-order velocity model to `n` uniformly sampled points.
#[no_mangle]
pub unsafe extern "C" fn gs_fit_second_order(
    t: *const f64,
    u: *const f64,
    y: *const f64,
    n: usize,
    out_fit: *mut GsFitResult,
) -> GsStatus {
    guard(|| {
        let o = out(out_fit, "out_fit")?;
        let ds = DataSet::new(
            slice(t, n, "t")?.to_vec(),
            slice(u, n, "u")?.to_vec(),
            slice(y, n, "y")?.to_vec(),
            "ffi",
        )?;
        let rep = fit_second_order(&ds, None)?;
        *o = GsFitResult {
            b0: rep.model.num()[0],
            a1: rep.model.den()[1],
            a0: rep.model.den()[2],
            fit_pct: rep.fit_pct,
            fpe: rep.fpe,
            mse: rep.mse,
            converged: rep.converged,
            stable: rep.stable,
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GsStepMetrics {
    /// NaN when the output never settles.
    pub tss: f64,
    pub os_pct: f64,
    pub ess: f64,
    pub settled: bool,
}

#[no_mangle]
pub unsafe extern "C" fn gs_analyze_step(
    t: *const f64,
    r: *const f64,
    y: *const f64,
    n: usize,
    band_pct: f64,
    out_metrics: *mut GsStepMetrics,
) -> GsStatus {
    guard(|| {
        let o = out(out_metrics, "out_metrics")?;
        let m = analyze_step_samples(slice(t, n, "t")?, slice(r, n, "r")?, slice(y, n, "y")?, band_pct)?;
        *o = GsStepMetrics {
            tss: m.tss.unwrap_or(f64::NAN),
            os_pct: m.os_pct,
            ess: m.ess,
            settled: m.settled,
        };
        Ok(())
    })
}

// ---- simulation ----

/// Opaque closed-loop trace.
pub struct GsTrace(SimTrace);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsTraceColumn {
    T = 0,
    R = 1,
    E = 2,
    U = 3,
    USat = 4,
    Y = 5,
}

/// Runs a scenario given as JSON text. File references inside it resolve
/// against `base_dir`, or the working directory when that is NULL.
#[no_mangle]
pub unsafe extern "C" fn gs_simulate_json(
    scenario_json: *const c_char,
    base_dir: *const c_char,
    out_trace: *mut *mut GsTrace,
) -> GsStatus {
    guard(|| {
        let o = out(out_trace, "out_trace")?;
        let text = c_str(scenario_json, "scenario_json")?;
        let dir = if base_dir.is_null() {
            PathBuf::from(".")
        } else {
            PathBuf::from(c_str(base_dir, "base_dir")?)
        };
        let file = ScenarioFile::parse(text, "<scenario>")?;
        let ls = file.resolve(&AssetRoot::Dir(dir), "", "<scenario>", &Overrides::default())?;
        let tr = simloop::run(&ls.scenario)?;
        *o = Box::into_raw(Box::new(GsTrace(tr)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gs_trace_free(trace: *mut GsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gs_trace_len(trace: *const GsTrace, out_len: *mut usize) -> GsStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(trace, "trace")?.0.len();
        Ok(())
    })
}

/// Whether the run was cut short by a numerical blow-up.
#[no_mangle]
pub unsafe extern "C" fn gs_trace_diverged(trace: *const GsTrace, out_diverged: *mut bool) -> GsStatus {
    guard(|| {
        *out(out_diverged, "out_diverged")? = handle(trace, "trace")?.0.diverged;
        Ok(())
    })
}

/// Largest saturated command.
#[no_mangle]
pub unsafe extern "C" fn gs_trace_max_control(trace: *const GsTrace, out_max: *mut f64) -> GsStatus {
    guard(|| {
        *out(out_max, "out_max")? = simloop::max_control(&handle(trace, "trace")?.0);
        Ok(())
    })
}

/// Copies one column into `buf`, which must hold the trace length.
#[no_mangle]
pub unsafe extern "C" fn gs_trace_column(
    trace: *const GsTrace,
    column: GsTraceColumn,
    buf: *mut f64,
    cap: usize,
) -> GsStatus {
    guard(|| {
        let tr = &handle(trace, "trace")?.0;
        let src = match column {
            GsTraceColumn::T => &tr.t,
            GsTraceColumn::R => &tr.r,
            GsTraceColumn::E => &tr.e,
            GsTraceColumn::U => &tr.u,
            GsTraceColumn::USat => &tr.u_sat,
            GsTraceColumn::Y => &tr.y,
        };
        if cap < src.len() {
            return Err(Fail(
                GsStatus::BufferTooSmall,
                format!("trace has {} samples, buffer holds {cap}", src.len()),
            ));
        }
        if !src.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        }
        Ok(())
    })
}

// ---- kinematics ----

/// Link lengths in metres, axis tilt in radians.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GsGeometry {
    pub l1: f64,
    pub l2: f64,
    pub alpha: f64,
}

fn geometry(g: &GsGeometry) -> Result<MountGeometry, Fail> {
    Ok(MountGeometry::new(g.l1, g.l2, g.alpha)?)
}

/// Fills `out_geometry` with the default mount geometry.
#[no_mangle]
pub unsafe extern "C" fn gs_geometry_default(out_geometry: *mut GsGeometry) -> GsStatus {
    guard(|| {
        let g = MountGeometry::default();
        *out(out_geometry, "out_geometry")? = GsGeometry {
            l1: g.l1,
            l2: g.l2,
            alpha: g.alpha,
        };
        Ok(())
    })
}

/// Joint angles (radians) to effector position `xyz[3]`.
#[no_mangle]
pub unsafe extern "C" fn gs_kin_direct(
    geom: *const GsGeometry,
    theta1: f64,
    theta2: f64,
    out_xyz: *mut f64,
) -> GsStatus {
    guard(|| {
        let g = geometry(handle(geom, "geom")?)?;
        if out_xyz.is_null() {
            return Err(null("out_xyz"));
        }
        let p = kinematics::direct(&g, JointAngles { theta1, theta2 });
        *out_xyz = p.x;
        *out_xyz.add(1) = p.y;
        *out_xyz.add(2) = p.z;
        Ok(())
    })
}

/// Effector position to principal-branch joint angles `theta[2]`.
#[no_mangle]
pub unsafe extern "C" fn gs_kin_inverse(
    geom: *const GsGeometry,
    x: f64,
    y: f64,
    z: f64,
    out_theta: *mut f64,
) -> GsStatus {
    guard(|| {
        let g = geometry(handle(geom, "geom")?)?;
        if out_theta.is_null() {
            return Err(null("out_theta"));
        }
        let j = kinematics::inverse(&g, EffectorPos { x, y, z })?;
        *out_theta = j.theta1;
        *out_theta.add(1) = j.theta2;
        Ok(())
    })
}
