//! C interface to the simulator, the action mask and frozen policies.
//!
//! Every fallible function returns an [`MgStatus`]. After a non-`Ok` status
//! the calling thread's message is available from [`mg_last_error`] until its
//! next failing call. Handles are opaque; release each with its `_free`
//! function. Panics never cross the boundary: they surface as
//! `MG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use microgrid_core::config::RunConfig;
use microgrid_core::env::Environment;
use microgrid_core::grid::{step_soc, EssSpec};
use microgrid_core::harness::{baseline_policy, Dataset, LearnedRun, Method};
use microgrid_core::maddpg::mask_action;
use microgrid_core::diffkit::ParamSet;
use microgrid_core::policy::Policy;
use microgrid_core::rng::SeedStreams;
use microgrid_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Configuration rejected; the message lists every problem.
    Validation = 3,
    Runtime = 4,
    NonFinite = 5,
    Panic = 6,
}

/// Energy storage parameters, MW and MWh.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MgEssSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub energy_cap: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MgMaskedAction {
    /// Command in MW.
    pub p: f64,
    pub p_low: f64,
    pub p_up: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MgStepInfo {
    /// $ for the slot just resolved.
    pub cost: f64,
    pub shed_mw: f64,
    pub p_grid: f64,
    pub balance_residual: f64,
    pub connected: bool,
    pub done: bool,
}

/// Resolved run configuration.
pub struct MgConfig {
    inner: RunConfig,
}

/// One test day of the configured dataset.
pub struct MgEnv {
    inner: Environment,
}

/// Frozen controller.
pub struct MgPolicy {
    inner: Box<dyn Policy>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MgStatus::Ok,
        Ok(Err(fail)) => {
            let (status, msg) = match fail {
                Fail::Null(what) => (MgStatus::NullPointer, format!("null pointer: {what}")),
                Fail::Arg(m) => (MgStatus::InvalidArgument, m),
                Fail::Core(e) => {
                    let status = match e {
                        Error::Validation(_) | Error::Parse(_) => MgStatus::Validation,
                        Error::InvalidInput(_) | Error::Shape { .. } => MgStatus::InvalidArgument,
                        Error::NonFinite(_) => MgStatus::NonFinite,
                        _ => MgStatus::Runtime,
                    };
                    (status, e.to_string())
                }
            };
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            MgStatus::Panic
        }
    }
}

fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes a pointer obtained from this library or a
    // valid object of type T; null is rejected.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: as in `deref`, with exclusive access for the call.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and the caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and the caller guarantees `len` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null, NUL-terminated by contract.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Fail::Arg(format!("{what} is not UTF-8")))
}

fn give<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = deref_mut(out, "out")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

fn release<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `give` and is freed once.
        drop(unsafe { Box::from_raw(p) });
    }
}

fn ess_spec(s: &MgEssSpec) -> Result<EssSpec, Fail> {
    let spec = EssSpec {
        id: "ess".into(),
        p_min: s.p_min,
        p_max: s.p_max,
        energy_cap: s.energy_cap,
        soc_min: s.soc_min,
        soc_max: s.soc_max,
        eff_charge: s.eff_charge,
        eff_discharge: s.eff_discharge,
    };
    let mut errs = Vec::new();
    spec.validate(&mut errs);
    if errs.is_empty() { Ok(spec) } else { Err(Fail::Arg(errs.join("; "))) }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the calling thread's last failure; empty when none. Valid
/// until the thread's next failing call.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn mg_config_default(out: *mut *mut MgConfig) -> MgStatus {
    guard(|| give(out, MgConfig { inner: RunConfig::default() }))
}

/// Parses a full TOML configuration, reporting every problem at once.
#[no_mangle]
pub extern "C" fn mg_config_from_toml(text: *const c_char, out: *mut *mut MgConfig) -> MgStatus {
    guard(|| {
        let inner = RunConfig::from_toml_str(c_str(text, "text")?)?;
        give(out, MgConfig { inner })
    })
}

#[no_mangle]
pub extern "C" fn mg_config_ess_count(config: *const MgConfig, out: *mut usize) -> MgStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(config, "config")?.inner.microgrid.ess.len();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn mg_config_free(config: *mut MgConfig) {
    release(config);
}

/// Environment for test day `day` (taken modulo the test-day count) with the
/// scenario streams of evaluation position `day`.
#[no_mangle]
pub extern "C" fn mg_env_new(config: *const MgConfig, day: usize, out: *mut *mut MgEnv) -> MgStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.inner;
        let dataset = Dataset::prepare(cfg)?;
        let test = &dataset.split.test;
        let i = day % test.len();
        let streams = SeedStreams::new(cfg.eval.scenario_seed);
        let sc = dataset.test_source(cfg).scenario_for_day(&streams, "eval", i as u64, test[i], cfg.train.window)?;
        let mut inner = Environment::new(cfg.microgrid.clone(), sc, cfg.train.window)?;
        inner.fail_agents(cfg.eval.fail_agents)?;
        give(out, MgEnv { inner })
    })
}

#[no_mangle]
pub extern "C" fn mg_env_reset(env: *mut MgEnv) -> MgStatus {
    guard(|| {
        deref_mut(env, "env")?.inner.reset();
        Ok(())
    })
}

/// Copies the current SoC of every ESS into `out` (`len` >= ESS count).
#[no_mangle]
pub extern "C" fn mg_env_soc(env: *const MgEnv, out: *mut f64, len: usize) -> MgStatus {
    guard(|| {
        let soc = &deref(env, "env")?.inner.state().soc;
        if len < soc.len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, need {}", soc.len())));
        }
        slice_mut(out, len, "out")?[..soc.len()].copy_from_slice(soc);
        Ok(())
    })
}

/// Applies one command per ESS in MW and advances one slot.
#[no_mangle]
pub extern "C" fn mg_env_step(env: *mut MgEnv, commands: *const f64, len: usize, info: *mut MgStepInfo) -> MgStatus {
    guard(|| {
        let env = &mut deref_mut(env, "env")?.inner;
        let info = deref_mut(info, "info")?;
        let cmd = slice(commands, len, "commands")?;
        let out = env.step(cmd)?;
        *info = MgStepInfo {
            cost: out.result.cost_total(),
            shed_mw: out.result.shed_mw(),
            p_grid: out.result.p_grid,
            balance_residual: out.result.balance_residual,
            connected: out.result.connected,
            done: out.done,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn mg_env_free(env: *mut MgEnv) {
    release(env);
}

/// The rule-based controller.
#[no_mangle]
pub extern "C" fn mg_policy_rule_based(config: *const MgConfig, out: *mut *mut MgPolicy) -> MgStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.inner;
        give(out, MgPolicy { inner: baseline_policy(cfg, Method::RuleBased)? })
    })
}

/// A trained controller loaded from a checkpoint written under `config`.
#[no_mangle]
pub extern "C" fn mg_policy_from_checkpoint(
    config: *const MgConfig,
    path: *const c_char,
    out: *mut *mut MgPolicy,
) -> MgStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.inner;
        let ckpt = ParamSet::load(Path::new(c_str(path, "path")?))?;
        give(out, MgPolicy { inner: LearnedRun::from_checkpoint(cfg, &ckpt)?.policy() })
    })
}

/// Writes the policy's masked commands for the environment's current slot.
#[no_mangle]
pub extern "C" fn mg_policy_act(policy: *mut MgPolicy, env: *const MgEnv, out: *mut f64, len: usize) -> MgStatus {
    guard(|| {
        let policy = &mut deref_mut(policy, "policy")?.inner;
        let env = &deref(env, "env")?.inner;
        let obs = env.observe()?;
        if obs.slot == 0 {
            policy.begin_day(env.scenario(), env.config())?;
        }
        let cmd = policy.commands(&obs, env.config())?;
        if len < cmd.len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, need {}", cmd.len())));
        }
        slice_mut(out, len, "out")?[..cmd.len()].copy_from_slice(&cmd);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn mg_policy_free(policy: *mut MgPolicy) {
    release(policy);
}

/// SoC after one slot at `p_ess` MW for `dt` hours, clamped to the band.
#[no_mangle]
pub extern "C" fn mg_step_soc(spec: *const MgEssSpec, soc: f64, p_ess: f64, dt: f64, out_soc: *mut f64) -> MgStatus {
    guard(|| {
        let spec = ess_spec(deref(spec, "spec")?)?;
        let out = deref_mut(out_soc, "out_soc")?;
        *out = step_soc(&spec, soc, p_ess, dt)?.soc;
        Ok(())
    })
}

/// Maps a raw output in [-1, 1] onto the SoC-feasible power interval.
#[no_mangle]
pub extern "C" fn mg_mask_action(
    spec: *const MgEssSpec,
    soc: f64,
    pi: f64,
    dt: f64,
    out: *mut MgMaskedAction,
) -> MgStatus {
    guard(|| {
        let spec = ess_spec(deref(spec, "spec")?)?;
        let out = deref_mut(out, "out")?;
        if ![soc, pi, dt].iter().all(|v| v.is_finite()) || dt <= 0.0 {
            return Err(Fail::Arg("soc, pi and dt must be finite with dt > 0".into()));
        }
        let m = mask_action(pi.clamp(-1.0, 1.0), &spec, soc, dt);
        *out = MgMaskedAction { p: m.p, p_low: m.lo, p_up: m.hi };
        Ok(())
    })
}
