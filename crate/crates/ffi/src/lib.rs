//! C ABI over `bevsel-core`.
//!
//! Every function returns a [`BevselStatus`]; on failure a message for the
//! calling thread is available from [`bevsel_last_error_message`]. Outputs
//! go through caller-provided pointers and are left untouched on failure.
//! Selectors are opaque heap objects released with [`bevsel_selector_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bevsel_core::bandit::{bound_check, theta, Phase, Policy, PolicyKind, SlotContext};
use bevsel_core::channel::{tx_latency_ms, PayloadSpec};
use bevsel_core::config::RunConfig;
use bevsel_core::experiment::run_experiment;
use bevsel_core::fusion::{fusion_deadline, select_compression, validate_rho_set, DeadlineParams};
use bevsel_core::geometry::{normalized_extended_fov, OrientedRect, Pose2D};
use bevsel_core::perception::{compression_degradation, marginal_bev_contribution, CompensationParams};
use bevsel_core::rng::{stream_rng, POLICY};
use bevsel_core::world::volatility_of;
use bevsel_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevselStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// A transition kernel failed validation or a computation did not converge.
    Numerical = 4,
    BoundViolation = 5,
    Io = 6,
    /// Scenario hash or schema mismatch.
    Mismatch = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevselPhase {
    Init = 0,
    Explore = 1,
    Exploit = 2,
    Index = 3,
}

/// Oriented rectangle: centre, heading (rad), length along the heading, width.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevselRect {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevselBoundReport {
    pub exploration_bound: f64,
    pub exploitation_bound: f64,
    pub exploration_ok: bool,
    pub exploitation_ok: bool,
}

/// Opaque collaborator selector.
pub struct BevselSelector {
    policy: Box<dyn Policy>,
    n: usize,
    k: usize,
    t: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Invalid(String),
    Small(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn core_status(e: &Error) -> BevselStatus {
    match e.root() {
        Error::InvalidArgument(_) | Error::FrameMismatch { .. } => BevselStatus::InvalidArgument,
        Error::Config(_) => BevselStatus::Config,
        Error::NotStochastic { .. }
        | Error::ReducibleKernel { .. }
        | Error::PeriodicKernel { .. }
        | Error::NonConvergence { .. } => BevselStatus::Numerical,
        Error::BoundViolation(_) => BevselStatus::BoundViolation,
        Error::Io { .. } | Error::Serde(_) => BevselStatus::Io,
        Error::HashMismatch { .. } | Error::SchemaMismatch { .. } => BevselStatus::Mismatch,
        Error::Slot { .. } => BevselStatus::InvalidArgument,
    }
}

fn guard<F>(f: F) -> BevselStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BevselStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            core_status(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} must not be NULL"));
            BevselStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            BevselStatus::InvalidArgument
        }
        Ok(Err(Failure::Small(need))) => {
            set_last_error(format!("buffer too small; {need} elements needed"));
            BevselStatus::BufferTooSmall
        }
        Err(_) => {
            set_last_error("internal panic".into());
            BevselStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn rect(r: &BevselRect) -> Result<OrientedRect, Failure> {
    Ok(OrientedRect::new(Pose2D::new(r.x, r.y, r.heading), r.length, r.width)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bevsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Length in bytes, including the terminating NUL, of the calling thread's
/// last error message; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn bevsel_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message, NUL-terminated, into `buf`.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bevsel_last_error_message(buf: *mut c_char, cap: usize) -> BevselStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone()).unwrap_or_default();
    let bytes = msg.as_bytes_with_nul();
    if buf.is_null() {
        return BevselStatus::NullPointer;
    }
    if cap < bytes.len() {
        return BevselStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
    BevselStatus::Ok
}

/// Fusion deadline in ms for volatility `v_d` between `lf_min_ms` and `lf_max_ms`.
///
/// # Safety
/// `out_ms` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_fusion_deadline(
    v_d: f64,
    alpha: f64,
    lf_min_ms: f64,
    lf_max_ms: f64,
    out_ms: *mut f64,
) -> BevselStatus {
    guard(|| {
        let params = DeadlineParams {
            alpha,
            lf_min_ms,
            lf_max_ms,
        };
        params.validate()?;
        *out(out_ms, "out_ms")? = fusion_deadline(v_d, &params)?;
        Ok(())
    })
}

/// Contribution lost by compressing with ratio `rho`.
///
/// # Safety
/// `out_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_compression_degradation(
    rho: f64,
    beta: f64,
    gamma: f64,
    out_value: *mut f64,
) -> BevselStatus {
    guard(|| {
        let p = CompensationParams {
            beta,
            gamma,
            ..Default::default()
        };
        *out(out_value, "out_value")? = compression_degradation(rho, &p)?;
        Ok(())
    })
}

/// Milliseconds to send `payload_bits / rho` bits at `rate_mbps`.
///
/// # Safety
/// `out_ms` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_tx_latency_ms(
    payload_bits: f64,
    rho: f64,
    rate_mbps: f64,
    out_ms: *mut f64,
) -> BevselStatus {
    guard(|| {
        *out(out_ms, "out_ms")? = tx_latency_ms(payload_bits, rho, rate_mbps)?;
        Ok(())
    })
}

/// Smallest ratio of `rho_set` meeting `deadline_ms`; `*out_late` is set
/// when none does and the largest ratio is returned.
///
/// # Safety
/// `rho_set` must point to `rho_len` values; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bevsel_select_compression(
    rate_mbps: f64,
    feature_bits: f64,
    deadline_ms: f64,
    rho_set: *const u32,
    rho_len: usize,
    out_rho: *mut u32,
    out_late: *mut bool,
) -> BevselStatus {
    guard(|| {
        let set = slice_arg(rho_set, rho_len, "rho_set")?;
        validate_rho_set(set)?;
        let payload = PayloadSpec {
            feature_bits,
            ..Default::default()
        };
        let (rho, late) = select_compression(rate_mbps, &payload, deadline_ms, set)?;
        let (r, l) = (out(out_rho, "out_rho")?, out(out_late, "out_late")?);
        *r = rho;
        *l = late;
        Ok(())
    })
}

/// Exploration threshold `D log2 t`.
///
/// # Safety
/// `out_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_theta(t: u64, d: f64, out_value: *mut f64) -> BevselStatus {
    guard(|| {
        *out(out_value, "out_value")? = theta(t, d)?;
        Ok(())
    })
}

/// `m + omega * a`.
///
/// # Safety
/// `out_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_marginal_bev_contribution(
    m: f64,
    a: f64,
    omega: f64,
    out_value: *mut f64,
) -> BevselStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Failure::Invalid(format!("omega must be in [0, 1], got {omega}")));
        }
        *out(out_value, "out_value")? = marginal_bev_contribution(m, a, omega);
        Ok(())
    })
}

/// Fraction of `fov_i` outside `fov_e`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bevsel_normalized_extended_fov(
    fov_i: *const BevselRect,
    fov_e: *const BevselRect,
    out_value: *mut f64,
) -> BevselStatus {
    guard(|| {
        let a = rect(fov_i.as_ref().ok_or(Failure::Null("fov_i"))?)?;
        let b = rect(fov_e.as_ref().ok_or(Failure::Null("fov_e"))?)?;
        *out(out_value, "out_value")? = normalized_extended_fov(&a, &b);
        Ok(())
    })
}

/// RMS of `speeds[i] - ego_speed`; 0 for an empty list.
///
/// # Safety
/// `speeds` must point to `len` values; `out_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bevsel_driving_volatility(
    ego_speed: f64,
    speeds: *const f64,
    len: usize,
    out_value: *mut f64,
) -> BevselStatus {
    guard(|| {
        let s = slice_arg(speeds, len, "speeds")?;
        *out(out_value, "out_value")? = volatility_of(ego_speed, s);
        Ok(())
    })
}

/// Exploration and exploitation epoch-count bounds at slot `t`.
///
/// # Safety
/// `out_report` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_bound_check(
    explorations: u32,
    exploitations: u32,
    t: u64,
    n: usize,
    k: usize,
    d: f64,
    out_report: *mut BevselBoundReport,
) -> BevselStatus {
    guard(|| {
        if k == 0 || t == 0 {
            return Err(Failure::Invalid("t and k must be >= 1".into()));
        }
        let r = bound_check(explorations, exploitations, t, n, k, d);
        *out(out_report, "out_report")? = BevselBoundReport {
            exploration_bound: r.exploration_bound,
            exploitation_bound: r.exploitation_bound,
            exploration_ok: r.exploration_ok(),
            exploitation_ok: r.exploitation_ok(),
        };
        Ok(())
    })
}

/// Creates a selector over `n` collaborators with budget `k`.
///
/// `policy` is one of `alg1`, `ecop`, `mass`, `random`, `optimal`; `seed`
/// only affects `random`.
///
/// # Safety
/// `policy` must be a NUL-terminated string; `out_selector` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_new(
    policy: *const c_char,
    n: usize,
    k: usize,
    d: f64,
    seed: u64,
    out_selector: *mut *mut BevselSelector,
) -> BevselStatus {
    guard(|| {
        let kind: PolicyKind = str_arg(policy, "policy")?.parse()?;
        let slot = out(out_selector, "out_selector")?;
        let p = kind.build(n, k, d, stream_rng(seed, POLICY, 0))?;
        *slot = Box::into_raw(Box::new(BevselSelector { policy: p, n, k, t: 0 }));
        Ok(())
    })
}

/// Releases a selector; NULL is ignored.
///
/// # Safety
/// `selector` must come from [`bevsel_selector_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_free(selector: *mut BevselSelector) {
    if !selector.is_null() {
        drop(Box::from_raw(selector));
    }
}

/// Advances the selector one slot and writes the chosen ids (1-based,
/// ascending) to `out_ids`.
///
/// `hidden` (per-collaborator current values, length `n`) is required by
/// the `optimal` policy and may be NULL otherwise. `out_phase` and
/// `out_epoch` may be NULL.
///
/// # Safety
/// `selector` must be live; `out_ids` must hold `cap` values; `hidden`,
/// when non-NULL, must hold `hidden_len` values.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_select(
    selector: *mut BevselSelector,
    hidden: *const f64,
    hidden_len: usize,
    out_ids: *mut u32,
    cap: usize,
    out_len: *mut usize,
    out_phase: *mut BevselPhase,
    out_epoch: *mut u32,
) -> BevselStatus {
    guard(|| {
        let s = out(selector, "selector")?;
        if out_ids.is_null() {
            return Err(Failure::Null("out_ids"));
        }
        if cap < s.k {
            return Err(Failure::Small(s.k));
        }
        let len = out(out_len, "out_len")?;
        let hidden = if hidden.is_null() {
            None
        } else {
            let h = slice_arg(hidden, hidden_len, "hidden")?;
            if h.len() != s.n {
                return Err(Failure::Invalid(format!(
                    "hidden has {} values, expected {}",
                    h.len(),
                    s.n
                )));
            }
            Some(h)
        };
        let sel = s.policy.select(&SlotContext { t: s.t + 1, hidden })?;
        s.t += 1;
        std::ptr::copy_nonoverlapping(sel.selected.as_ptr(), out_ids, sel.selected.len());
        *len = sel.selected.len();
        if let Some(p) = out_phase.as_mut() {
            *p = match sel.phase {
                Phase::Init => BevselPhase::Init,
                Phase::Explore => BevselPhase::Explore,
                Phase::Exploit => BevselPhase::Exploit,
                Phase::Index => BevselPhase::Index,
            };
        }
        if let Some(e) = out_epoch.as_mut() {
            *e = sel.epoch;
        }
        Ok(())
    })
}

/// Reports the observed contribution of collaborator `id` for the current slot.
///
/// # Safety
/// `selector` must be live.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_observe(selector: *mut BevselSelector, id: u32, value: f64) -> BevselStatus {
    guard(|| {
        out(selector, "selector")?.policy.observe(id, value)?;
        Ok(())
    })
}

/// Completed exploration and exploitation epochs.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_counters(
    selector: *const BevselSelector,
    out_explorations: *mut u32,
    out_exploitations: *mut u32,
) -> BevselStatus {
    guard(|| {
        let s = selector.as_ref().ok_or(Failure::Null("selector"))?;
        let st = s.policy.state();
        let (a, b) = (
            out(out_explorations, "out_explorations")?,
            out(out_exploitations, "out_exploitations")?,
        );
        *a = st.completed_explorations();
        *b = st.completed_exploitations();
        Ok(())
    })
}

/// Running mean of collaborator `id`'s observations.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_mean(
    selector: *const BevselSelector,
    id: u32,
    out_mean: *mut f64,
) -> BevselStatus {
    guard(|| {
        let s = selector.as_ref().ok_or(Failure::Null("selector"))?;
        if id == 0 || id as usize > s.n {
            return Err(Failure::Invalid(format!("id {id} outside 1..={}", s.n)));
        }
        *out(out_mean, "out_mean")? = s.policy.state().means[id as usize - 1];
        Ok(())
    })
}

/// Forgets all statistics and restarts the slot clock.
///
/// # Safety
/// `selector` must be live.
#[no_mangle]
pub unsafe extern "C" fn bevsel_selector_reset(selector: *mut BevselSelector) -> BevselStatus {
    guard(|| {
        let s = out(selector, "selector")?;
        s.policy.reset();
        s.t = 0;
        Ok(())
    })
}

/// Runs the experiment described by the config file at `config_path` and
/// writes its artifacts to `out_dir`.
///
/// # Safety
/// Strings must be NUL-terminated; `out_final_regret` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn bevsel_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    out_final_regret: *mut f64,
) -> BevselStatus {
    guard(|| {
        let cfg = RunConfig::load(Path::new(str_arg(config_path, "config_path")?))?;
        let dir = str_arg(out_dir, "out_dir")?;
        let s = run_experiment(&cfg, Path::new(dir))?;
        if let Some(r) = out_final_regret.as_mut() {
            *r = s.aggregate.final_regret.mean;
        }
        Ok(())
    })
}
