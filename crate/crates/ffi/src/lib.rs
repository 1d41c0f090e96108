//! C ABI over the peglab primitive environment and trained policies.
//!
//! Every fallible function returns a [`PeglabStatus`]; on failure the
//! message is kept per thread and can be read with
//! [`peglab_last_error_message`]. Handles are opaque and must be released
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use peglab::env::{HybridAction, Observation, PamdpEnv, OBS_DIM};
use peglab::harness::run::pamdp_env;
use peglab::harness::{Method, RunConfig};
use peglab::policy::{ActionSpace, Checkpoint, Policy, PolicyInput};
use peglab::primitives::MpStatus;
use peglab::se3::Vec6;
use peglab::Error;

/// Length of an observation vector: the pose (position, rotation vector)
/// followed by the wrench, both in the task frame.
pub const PEGLAB_OBS_DIM: usize = 12;
const _: () = assert!(PEGLAB_OBS_DIM == OBS_DIM);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeglabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    InfeasibleAction = 4,
    StartInCollision = 5,
    NonFinite = 6,
    Checkpoint = 7,
    Io = 8,
    Parse = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeglabMpStatus {
    Continue = 0,
    Success = 1,
    Failure = 2,
}

/// Outcome of one primitive step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeglabStepInfo {
    pub mp_index: usize,
    pub status: PeglabMpStatus,
    pub duration_s: f64,
    pub control_steps: u64,
    pub true_distance_m: f64,
    pub success: bool,
    pub mp_count: usize,
}

/// Primitive environment built from a run config.
pub struct PeglabEnv {
    env: PamdpEnv,
}

/// Trained policy loaded from a checkpoint.
pub struct PeglabPolicy {
    policy: Policy,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PeglabStatus {
    match e {
        Error::InvalidArgument(_) => PeglabStatus::InvalidArgument,
        Error::InvalidConfig { .. } => PeglabStatus::InvalidConfig,
        Error::InfeasibleAction(_) => PeglabStatus::InfeasibleAction,
        Error::StartInCollision { .. } => PeglabStatus::StartInCollision,
        Error::NonFinite(_) => PeglabStatus::NonFinite,
        Error::Checkpoint(_) => PeglabStatus::Checkpoint,
        Error::Io { .. } => PeglabStatus::Io,
        Error::Parse { .. } => PeglabStatus::Parse,
    }
}

enum Failure {
    Status(PeglabStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(PeglabStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PeglabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PeglabStatus::Ok
        }
        Ok(Err(Failure::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PeglabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(PeglabStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

fn write_obs(obs: &Observation, out: *mut f64) {
    let a = obs.to_array();
    // SAFETY: callers pass a buffer of PEGLAB_OBS_DIM doubles.
    unsafe { std::ptr::copy_nonoverlapping(a.as_ptr(), out, OBS_DIM) };
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in
/// bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn peglab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn peglab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds an environment from a TOML run config (method `hybrid` or
/// `discrete`).
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_new(config_toml: *const c_char, out: *mut *mut PeglabEnv) -> PeglabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(config_toml, "config_toml")?;
        let cfg = RunConfig::from_toml_str(text, Path::new("<ffi>"))?;
        if !matches!(cfg.method, Method::Hybrid | Method::Discrete) {
            return Err(Failure::Status(
                PeglabStatus::InvalidConfig,
                format!("method `{}` has no primitive environment", cfg.method),
            ));
        }
        let env = pamdp_env(&cfg)?;
        *out = Box::into_raw(Box::new(PeglabEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`peglab_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_free(env: *mut PeglabEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of primitives in the environment's catalog.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_num_primitives(env: *const PeglabEnv, out: *mut usize) -> PeglabStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = env.env.catalog().len();
        Ok(())
    })
}

/// Number of learnable parameters of primitive `index`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_primitive_dim(env: *const PeglabEnv, index: usize, out: *mut usize) -> PeglabStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mp = env.env.catalog().get(index).ok_or_else(|| {
            Failure::Status(PeglabStatus::InvalidArgument, format!("no primitive {index}"))
        })?;
        *out = mp.dim();
        Ok(())
    })
}

/// Starts an episode and writes the first observation.
///
/// # Safety
/// `env` must be a live handle; `obs_out` must hold [`PEGLAB_OBS_DIM`]
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_reset(env: *mut PeglabEnv, seed: u64, obs_out: *mut f64) -> PeglabStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        if obs_out.is_null() {
            return Err(null("obs_out"));
        }
        let obs = env.env.reset(seed)?;
        write_obs(&obs, obs_out);
        Ok(())
    })
}

/// Whether `obs` counts as in contact (selects the feasible primitives).
///
/// # Safety
/// `env` must be a live handle, `obs` must hold [`PEGLAB_OBS_DIM`]
/// doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_is_contact(env: *const PeglabEnv, obs: *const f64, out: *mut bool) -> PeglabStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = std::slice::from_raw_parts(obs, OBS_DIM);
        let o = Observation {
            p: Vec6::from_column_slice(&s[..6]),
            f_ext: Vec6::from_column_slice(&s[6..]),
        };
        *out = env.env.is_contact(&o);
        Ok(())
    })
}

/// Executes primitive `mp_index` with `n_params` normalized parameters.
///
/// # Safety
/// `env` must be a live handle; `params` must hold `n_params` doubles (may
/// be null when `n_params` is 0); `obs_out` must hold
/// [`PEGLAB_OBS_DIM`] doubles; `reward`, `done` and `info` must be valid.
#[no_mangle]
pub unsafe extern "C" fn peglab_env_step(
    env: *mut PeglabEnv,
    mp_index: usize,
    params: *const f64,
    n_params: usize,
    obs_out: *mut f64,
    reward: *mut f64,
    done: *mut bool,
    info: *mut PeglabStepInfo,
) -> PeglabStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        if obs_out.is_null() {
            return Err(null("obs_out"));
        }
        let reward = reward.as_mut().ok_or_else(|| null("reward"))?;
        let done = done.as_mut().ok_or_else(|| null("done"))?;
        let info = info.as_mut().ok_or_else(|| null("info"))?;
        let params = match (params.is_null(), n_params) {
            (_, 0) => Vec::new(),
            (true, _) => return Err(null("params")),
            (false, n) => std::slice::from_raw_parts(params, n).to_vec(),
        };
        let (obs, r, d, i) = env.env.step(&HybridAction { mp_index, params })?;
        write_obs(&obs, obs_out);
        *reward = r;
        *done = d;
        *info = PeglabStepInfo {
            mp_index: i.mp_index,
            status: match i.status {
                MpStatus::Continue => PeglabMpStatus::Continue,
                MpStatus::Success => PeglabMpStatus::Success,
                MpStatus::Failure => PeglabMpStatus::Failure,
            },
            duration_s: i.duration_s,
            control_steps: i.control_steps,
            true_distance_m: i.true_distance_m,
            success: i.success,
            mp_count: i.mp_count,
        };
        Ok(())
    })
}

/// Loads a policy checkpoint (JSON).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn peglab_policy_load(path: *const c_char, out: *mut *mut PeglabPolicy) -> PeglabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let ck = Checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(PeglabPolicy { policy: ck.policy }));
        Ok(())
    })
}

/// Checks that a policy acts over the given environment's primitives.
///
/// # Safety
/// Both handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn peglab_policy_matches_env(
    policy: *const PeglabPolicy,
    env: *const PeglabEnv,
    out: *mut bool,
) -> PeglabStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or_else(|| null("policy"))?;
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = policy.policy.space == ActionSpace::from_catalog(env.env.catalog());
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle from [`peglab_policy_load`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn peglab_policy_free(policy: *mut PeglabPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Inference-mode action: most probable feasible primitive and the mean of
/// its parameter distribution (normalized). `params_len` receives the
/// parameter count; fails with `BufferTooSmall` if it exceeds
/// `params_cap`.
///
/// # Safety
/// `policy` must be a live handle, `obs` must hold [`PEGLAB_OBS_DIM`]
/// doubles, `params_out` must hold `params_cap` doubles (may be null when
/// `params_cap` is 0) and `mp_out`/`params_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn peglab_policy_act(
    policy: *const PeglabPolicy,
    obs: *const f64,
    contact: bool,
    mp_out: *mut usize,
    params_out: *mut f64,
    params_cap: usize,
    params_len: *mut usize,
) -> PeglabStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or_else(|| null("policy"))?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        let mp_out = mp_out.as_mut().ok_or_else(|| null("mp_out"))?;
        let params_len = params_len.as_mut().ok_or_else(|| null("params_len"))?;
        let mut a = [0.0; OBS_DIM];
        a.copy_from_slice(std::slice::from_raw_parts(obs, OBS_DIM));
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Failure::Lib(Error::NonFinite("observation".into())));
        }
        let act = policy.policy.act_deterministic(&PolicyInput { obs: a, contact });
        *params_len = act.params.len();
        if act.params.len() > params_cap {
            return Err(Failure::Status(
                PeglabStatus::BufferTooSmall,
                format!("{} parameters, buffer holds {params_cap}", act.params.len()),
            ));
        }
        if !act.params.is_empty() {
            if params_out.is_null() {
                return Err(null("params_out"));
            }
            std::ptr::copy_nonoverlapping(act.params.as_ptr(), params_out, act.params.len());
        }
        *mp_out = act.mp_index;
        Ok(())
    })
}
