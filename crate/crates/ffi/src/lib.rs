//! C ABI over `omar-core`.
//!
//! Conventions:
//! - every fallible function returns an [`OmarStatus`]; results come back
//!   through out-pointers that are written only on success
//! - configurations and policies are opaque handles released with their
//!   `_free` function; strings returned by the library are released with
//!   [`omar_string_free`]
//! - after a failure, [`omar_last_error_message`] describes it; the message
//!   belongs to the calling thread and stays valid until its next call
//! - panics never cross the boundary; they surface as `OMAR_STATUS_PANIC`

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use omar::advantage::{gae, turn_level_advantages, AdvantageConfig};
use omar::arena::run_arena;
use omar::config::Config;
use omar::policy::{load_checkpoint, save_checkpoint, Policy, PolicyParameters};
use omar::rollout::{run_episode, EpisodeKey, Seating};
use omar::train::ppo::surrogate_from_ratio;
use omar::train::{train_loop, TrainOutput};
use omar::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmarStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad arguments, configuration or input data.
    InvalidArgument = 3,
    /// File system failure.
    Io = 4,
    /// Failure while running: numerics, environment, serialization.
    Runtime = 5,
    /// A panic was caught at the boundary.
    Panic = 6,
}

/// Opaque validated configuration.
pub struct OmarConfig {
    inner: Config,
}

/// Opaque policy parameters.
pub struct OmarPolicy {
    inner: PolicyParameters,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(OmarStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => OmarStatus::Io,
            e if e.is_validation() => OmarStatus::InvalidArgument,
            Error::Shape(_) => OmarStatus::InvalidArgument,
            _ => OmarStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OmarStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(OmarStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording the error message and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OmarStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OmarStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_error(&format!("panic: {msg}"));
            OmarStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(OmarStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure(OmarStatus::Runtime, "output contains a nul byte".into()))
}

fn json_error(e: serde_json::Error) -> Failure {
    Failure(OmarStatus::Runtime, e.to_string())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn omar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if the last call
/// succeeded. Do not free it.
#[no_mangle]
pub extern "C" fn omar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn omar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_config_from_toml(toml: *const c_char, out: *mut *mut OmarConfig) -> OmarStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config::from_toml_str(text)?;
        *out = Box::into_raw(Box::new(OmarConfig { inner: cfg }));
        Ok(())
    })
}

/// Loads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_config_load(path: *const c_char, out: *mut *mut OmarConfig) -> OmarStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(OmarConfig { inner: cfg }));
        Ok(())
    })
}

/// The effective configuration, every default filled in, as TOML.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_config_to_toml(cfg: *const OmarConfig, out: *mut *mut c_char) -> OmarStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c_string(cfg.inner.to_toml_string()?)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omar_config_free(cfg: *mut OmarConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Fresh parameters for the configured policy shape.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_policy_initial(cfg: *const OmarConfig, seed: u64, out: *mut *mut OmarPolicy) -> OmarStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(OmarPolicy { inner: cfg.inner.initial_params(seed) }));
        Ok(())
    })
}

/// Loads a policy checkpoint; with a non-null `cfg` its shape must match.
///
/// # Safety
/// `path` must be a nul-terminated string, `cfg` null or a live handle and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_policy_load(
    path: *const c_char,
    cfg: *const OmarConfig,
    out: *mut *mut OmarPolicy,
) -> OmarStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let shape = cfg.as_ref().map(|c| {
            let p = &c.inner.policy;
            (c.inner.env.vocabulary().len(), p.feature_dim, p.embed_dim)
        });
        let params = load_checkpoint(Path::new(path), shape)?;
        *out = Box::into_raw(Box::new(OmarPolicy { inner: params }));
        Ok(())
    })
}

/// Writes a policy checkpoint.
///
/// # Safety
/// `policy` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn omar_policy_save(policy: *const OmarPolicy, path: *const c_char) -> OmarStatus {
    guard(|| {
        let policy = ref_arg(policy, "policy")?;
        let path = str_arg(path, "path")?;
        save_checkpoint(Path::new(path), &policy.inner)?;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omar_policy_free(policy: *mut OmarPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Plays one self-play episode and returns its record as JSON.
///
/// # Safety
/// `cfg` and `policy` must be live handles; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_run_episode_json(
    cfg: *const OmarConfig,
    policy: *const OmarPolicy,
    seed: u64,
    episode_id: u64,
    out_json: *mut *mut c_char,
) -> OmarStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.inner;
        let policy = ref_arg(policy, "policy")?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let actor = Policy::new(policy.inner.clone(), cfg.policy.decode());
        let key = EpisodeKey { seed, step: 0, episode_id };
        let ep = run_episode(&cfg.env, key, &Seating::SelfPlay(&actor), &cfg.rollout_settings())?;
        *out_json = to_c_string(serde_json::to_string(&ep.record).map_err(json_error)?)?;
        Ok(())
    })
}

/// Runs the full training loop. With a non-null `out_dir` metrics,
/// checkpoints and trajectories are written there. The trained policy is
/// returned through `out_policy` when it is non-null.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` null or a nul-terminated string and
/// `out_policy` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_train(
    cfg: *const OmarConfig,
    seed: u64,
    out_dir: *const c_char,
    out_policy: *mut *mut OmarPolicy,
) -> OmarStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.inner;
        let dir = if out_dir.is_null() { None } else { Some(PathBuf::from(str_arg(out_dir, "out_dir")?)) };
        let outcome = train_loop(cfg, seed, &TrainOutput { dir, resume: None })?;
        if !out_policy.is_null() {
            *out_policy = Box::into_raw(Box::new(OmarPolicy { inner: outcome.params }));
        }
        Ok(())
    })
}

/// Head-to-head evaluation of two policies under the configured arena
/// settings; returns the report as JSON.
///
/// # Safety
/// `cfg`, `a` and `b` must be live handles; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_arena_json(
    cfg: *const OmarConfig,
    a: *const OmarPolicy,
    b: *const OmarPolicy,
    out_json: *mut *mut c_char,
) -> OmarStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.inner;
        let a = ref_arg(a, "a")?;
        let b = ref_arg(b, "b")?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let pa = Policy::new(a.inner.clone(), cfg.policy.decode());
        let pb = Policy::new(b.inner.clone(), cfg.policy.decode());
        let report = run_arena(&cfg.env, &pa, &pb, &cfg.arena, &cfg.rollout_settings())?;
        *out_json = to_c_string(serde_json::to_string(&report).map_err(json_error)?)?;
        Ok(())
    })
}

/// Generalized advantage estimation over one trajectory:
/// `out[t] = δ_t + γλ·out[t+1]` with `δ_t = r_t + γ·v_{t+1} − v_t` and a
/// zero value past the end. All arrays have `len` entries.
///
/// # Safety
/// The pointers must reference `len` readable (`out`: writable) doubles.
#[no_mangle]
pub unsafe extern "C" fn omar_gae(
    rewards: *const f64,
    values: *const f64,
    len: usize,
    gamma: f64,
    lambda: f64,
    out: *mut f64,
) -> OmarStatus {
    guard(|| {
        let r = slice_arg(rewards, len, "rewards")?;
        let v = slice_arg(values, len, "values")?;
        let out = out_slice(out, len, "out")?;
        if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
            return Err(invalid("gamma and lambda must lie in [0, 1]"));
        }
        if r.iter().chain(v).any(|x| !x.is_finite()) {
            return Err(invalid("rewards and values must be finite"));
        }
        out.copy_from_slice(&gae(r, v, gamma, lambda));
        Ok(())
    })
}

/// Turn-level advantages and value targets for an episode whose reward
/// arrives after the last turn. `last_token_values`, `out_advantages` and
/// `out_targets` have `turns` entries.
///
/// # Safety
/// The pointers must reference `turns` readable or writable doubles.
#[no_mangle]
pub unsafe extern "C" fn omar_turn_advantages(
    last_token_values: *const f64,
    turns: usize,
    episode_reward: f64,
    gamma: f64,
    lambda: f64,
    out_advantages: *mut f64,
    out_targets: *mut f64,
) -> OmarStatus {
    guard(|| {
        let v = slice_arg(last_token_values, turns, "last_token_values")?;
        let adv_out = out_slice(out_advantages, turns, "out_advantages")?;
        let tgt_out = out_slice(out_targets, turns, "out_targets")?;
        let cfg = AdvantageConfig { gamma_turn: gamma, lambda_turn: lambda, ..Default::default() };
        let (adv, targets) = turn_level_advantages(v, episode_reward, &cfg)?;
        adv_out.copy_from_slice(&adv);
        tgt_out.copy_from_slice(&targets);
        Ok(())
    })
}

/// Clipped PPO surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)` for one token.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omar_ppo_surrogate(ratio: f64, advantage: f64, epsilon: f64, out: *mut f64) -> OmarStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(ratio.is_finite() && ratio >= 0.0 && advantage.is_finite() && epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid("ratio must be finite and non-negative, advantage finite, epsilon positive"));
        }
        *out = surrogate_from_ratio(ratio, advantage, epsilon);
        Ok(())
    })
}
