//! C interface over the prediction library.
//!
//! Objects are opaque handles created and destroyed through this API. Every
//! fallible function returns an [`HsfmStatus`]; on failure the message is
//! kept per thread and can be read with [`hsfm_last_error_message`].
//! Output arrays are caller-allocated: functions producing `steps + 1`
//! entries fail with `HSFM_STATUS_BUFFER_TOO_SMALL` when `out_len` is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hsfm_signn::covnet::{covnet_forward, covnet_load, signn_rollout, CovNetInput, CovNetParams};
use hsfm_signn::eval::mahalanobis;
use hsfm_signn::uncertainty::{fp_rollout, mc_estimate, McConfig};
use hsfm_signn::{rollout, Agent, AgentState, Error, Goal, HsfmParams, Mat, SceneSnapshot, Vec2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NotPositiveDefinite = 4,
    Numerical = 5,
    Parse = 6,
    Io = 7,
    Config = 8,
    Data = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Model parameters (opaque).
pub struct HsfmParamsHandle(HsfmParams);

/// Scene under construction (opaque).
pub struct HsfmScene {
    agents: Vec<Agent>,
    timestamp: f64,
}

/// Covariance network weights (opaque).
pub struct HsfmCovNet(CovNetParams);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsfmAgentState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
    pub angular_rate: f64,
}

/// Mean and 2x2 position covariance at one step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsfmPrediction {
    pub mean_x: f64,
    pub mean_y: f64,
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
}

/// Initial uncertainty of the ego agent.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsfmInitNoise {
    pub pos_std: f64,
    pub vel_std: f64,
    pub heading_std: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HsfmStatus {
    match e {
        Error::Dimension(_) => HsfmStatus::Dimension,
        Error::NotPositiveDefinite { .. } => HsfmStatus::NotPositiveDefinite,
        Error::Numerical(_) => HsfmStatus::Numerical,
        Error::InvalidArgument(_) => HsfmStatus::InvalidArgument,
        Error::Parse { .. } => HsfmStatus::Parse,
        Error::Config(_) => HsfmStatus::Config,
        Error::Data(_) => HsfmStatus::Data,
        Error::Io { .. } => HsfmStatus::Io,
    }
}

enum Failure {
    Status(HsfmStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn fail(status: HsfmStatus, msg: impl Into<String>) -> Failure {
    Failure::Status(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            HsfmStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            HsfmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(HsfmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(HsfmStatus::NullPointer, "output buffer is null"));
    }
    if len < needed {
        return Err(fail(
            HsfmStatus::BufferTooSmall,
            format!("output buffer holds {len} entries, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

fn build_scene(s: &HsfmScene) -> Result<SceneSnapshot, Failure> {
    Ok(SceneSnapshot::new(s.agents.clone(), s.timestamp)?)
}

fn prediction(mean: Vec2, cov: &Mat) -> HsfmPrediction {
    HsfmPrediction {
        mean_x: mean.x,
        mean_y: mean.y,
        cov_xx: cov[(0, 0)],
        cov_xy: cov[(0, 1)],
        cov_yy: cov[(1, 1)],
    }
}

/// Copies the calling thread's last error message (NUL-terminated, possibly
/// truncated) into `buf` and returns its full length in bytes without the
/// terminator. Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hsfm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Default parameters; free with [`hsfm_params_free`].
#[no_mangle]
pub extern "C" fn hsfm_params_new() -> *mut HsfmParamsHandle {
    Box::into_raw(Box::new(HsfmParamsHandle(HsfmParams::default())))
}

/// Sets one parameter by its config key (e.g. `"relaxation_time"`).
///
/// # Safety
/// `params` must come from [`hsfm_params_new`]; `key` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn hsfm_params_set(
    params: *mut HsfmParamsHandle,
    key: *const c_char,
    value: f64,
) -> HsfmStatus {
    guard(|| {
        let p = params
            .as_mut()
            .ok_or_else(|| fail(HsfmStatus::NullPointer, "params is null"))?;
        let key = CStr::from_ptr(deref(key, "key")?)
            .to_str()
            .map_err(|_| fail(HsfmStatus::InvalidArgument, "key is not UTF-8"))?;
        let mut next = p.0;
        let slot = match key {
            "relaxation_time" => &mut next.relaxation_time,
            "desired_speed" => &mut next.desired_speed,
            "repulsion_strength" => &mut next.repulsion_strength,
            "repulsion_range" => &mut next.repulsion_range,
            "anisotropy" => &mut next.anisotropy,
            "combined_radius" => &mut next.combined_radius,
            "forward_gain" => &mut next.forward_gain,
            "sideward_gain" => &mut next.sideward_gain,
            "angular_damping" => &mut next.angular_damping,
            "heading_inertia" => &mut next.heading_inertia,
            "dt" => &mut next.dt,
            "goal_radius" => &mut next.goal_radius,
            other => {
                return Err(fail(
                    HsfmStatus::InvalidArgument,
                    format!("unknown parameter `{other}`"),
                ))
            }
        };
        *slot = value;
        next.validate()?;
        p.0 = next;
        Ok(())
    })
}

/// # Safety
/// `params` must be null or come from [`hsfm_params_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hsfm_params_free(params: *mut HsfmParamsHandle) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Empty scene at `timestamp` seconds; free with [`hsfm_scene_free`].
#[no_mangle]
pub extern "C" fn hsfm_scene_new(timestamp: f64) -> *mut HsfmScene {
    Box::into_raw(Box::new(HsfmScene {
        agents: Vec::new(),
        timestamp,
    }))
}

/// Adds an agent heading for `(goal_x, goal_y)` at `desired_speed` m/s.
///
/// # Safety
/// `scene` must come from [`hsfm_scene_new`].
#[no_mangle]
pub unsafe extern "C" fn hsfm_scene_add_agent(
    scene: *mut HsfmScene,
    id: u64,
    state: HsfmAgentState,
    goal_x: f64,
    goal_y: f64,
    desired_speed: f64,
) -> HsfmStatus {
    guard(|| {
        let s = scene
            .as_mut()
            .ok_or_else(|| fail(HsfmStatus::NullPointer, "scene is null"))?;
        if s.agents.iter().any(|a| a.id == id) {
            return Err(fail(
                HsfmStatus::InvalidArgument,
                format!("duplicate agent id {id}"),
            ));
        }
        if !(desired_speed >= 0.0 && desired_speed.is_finite()) {
            return Err(fail(
                HsfmStatus::InvalidArgument,
                "desired_speed must be >= 0",
            ));
        }
        let st = AgentState::new(
            Vec2::new(state.x, state.y),
            Vec2::new(state.vx, state.vy),
            state.heading,
            state.angular_rate,
        )?;
        s.agents.push(Agent {
            id,
            state: st,
            goal: Goal {
                target: Vec2::try_new(goal_x, goal_y)?,
            },
            desired_speed,
        });
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or come from [`hsfm_scene_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hsfm_scene_free(scene: *mut HsfmScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Mean rollout of agent `id`: writes `steps + 1` states into `out`.
///
/// # Safety
/// Handles must be valid; `out` must be valid for `out_len` entries.
#[no_mangle]
pub unsafe extern "C" fn hsfm_rollout(
    scene: *const HsfmScene,
    params: *const HsfmParamsHandle,
    id: u64,
    steps: usize,
    out: *mut HsfmAgentState,
    out_len: usize,
) -> HsfmStatus {
    guard(|| {
        let snap = build_scene(deref(scene, "scene")?)?;
        let p = &deref(params, "params")?.0;
        let index = snap.index_of(id)?;
        let out = out_slice(out, out_len, steps + 1)?;
        for (slot, s) in out.iter_mut().zip(rollout(&snap, p, steps)) {
            let a = s.agents()[index].state;
            *slot = HsfmAgentState {
                x: a.position.x,
                y: a.position.y,
                vx: a.velocity.x,
                vy: a.velocity.y,
                heading: a.heading,
                angular_rate: a.angular_rate,
            };
        }
        Ok(())
    })
}

fn mc_config(noise: HsfmInitNoise, n_samples: usize, seed: u64) -> McConfig {
    McConfig {
        n_samples,
        seed,
        init_pos_std: noise.pos_std,
        init_vel_std: noise.vel_std,
        init_heading_std: noise.heading_std,
    }
}

/// Forward-propagated position belief of agent `id`: `steps + 1` entries.
///
/// # Safety
/// Handles must be valid; `out` must be valid for `out_len` entries.
#[no_mangle]
pub unsafe extern "C" fn hsfm_fp_rollout(
    scene: *const HsfmScene,
    params: *const HsfmParamsHandle,
    id: u64,
    noise: HsfmInitNoise,
    steps: usize,
    out: *mut HsfmPrediction,
    out_len: usize,
) -> HsfmStatus {
    guard(|| {
        let snap = build_scene(deref(scene, "scene")?)?;
        let p = &deref(params, "params")?.0;
        let cfg = mc_config(noise, 2, 0);
        cfg.validate()?;
        let belief0 = cfg.initial_belief(snap.agent(id)?.state);
        let out = out_slice(out, out_len, steps + 1)?;
        let beliefs = fp_rollout(&belief0, &snap, id, p, steps)?;
        for (slot, b) in out.iter_mut().zip(&beliefs) {
            *slot = prediction(b.mean.position, &b.position_covariance());
        }
        Ok(())
    })
}

/// Monte-Carlo position statistics of agent `id`: `steps + 1` entries.
///
/// # Safety
/// Handles must be valid; `out` must be valid for `out_len` entries.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hsfm_mc_estimate(
    scene: *const HsfmScene,
    params: *const HsfmParamsHandle,
    id: u64,
    noise: HsfmInitNoise,
    n_samples: usize,
    seed: u64,
    steps: usize,
    out: *mut HsfmPrediction,
    out_len: usize,
) -> HsfmStatus {
    guard(|| {
        let snap = build_scene(deref(scene, "scene")?)?;
        let p = &deref(params, "params")?.0;
        let out = out_slice(out, out_len, steps + 1)?;
        let est = mc_estimate(&snap, id, p, &mc_config(noise, n_samples, seed), steps)?;
        for (slot, m) in out.iter_mut().zip(&est) {
            *slot = prediction(m.mean, &m.cov2);
        }
        Ok(())
    })
}

/// Loads network weights; on success `*out` owns a handle to free with
/// [`hsfm_covnet_free`].
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsfm_covnet_load(
    path: *const c_char,
    out: *mut *mut HsfmCovNet,
) -> HsfmStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HsfmStatus::NullPointer, "out is null"));
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(deref(path, "path")?)
            .to_str()
            .map_err(|_| fail(HsfmStatus::InvalidArgument, "path is not UTF-8"))?;
        let net = covnet_load(Path::new(path))?;
        *out = Box::into_raw(Box::new(HsfmCovNet(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or come from [`hsfm_covnet_load`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hsfm_covnet_free(net: *mut HsfmCovNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// One network evaluation. `input` holds 8 values
/// `x, y, vx, vy, var_x, var_y, pred_x, pred_y`; `out` receives `var_x, var_y`.
///
/// # Safety
/// `input` must point to 8 readable and `out` to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hsfm_covnet_forward(
    net: *const HsfmCovNet,
    input: *const f64,
    out: *mut f64,
) -> HsfmStatus {
    guard(|| {
        let net = &deref(net, "net")?.0;
        let v = std::slice::from_raw_parts(deref(input, "input")?, 8);
        let out = out_slice(out, 2, 2)?;
        if v.iter().any(|x| !x.is_finite()) || v[4] < 0.0 || v[5] < 0.0 {
            return Err(fail(
                HsfmStatus::InvalidArgument,
                "inputs must be finite with non-negative variances",
            ));
        }
        let input = CovNetInput {
            state: [v[0], v[1], v[2], v[3]],
            sigma: [v[4], v[5]],
            pred: [v[6], v[7]],
        };
        out.copy_from_slice(&covnet_forward(net, &input));
        Ok(())
    })
}

/// Mean rollout with per-layer network variances: `steps + 1` entries,
/// covariances diagonal.
///
/// # Safety
/// Handles must be valid; `out` must be valid for `out_len` entries.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hsfm_signn_rollout(
    scene: *const HsfmScene,
    params: *const HsfmParamsHandle,
    net: *const HsfmCovNet,
    id: u64,
    var0_x: f64,
    var0_y: f64,
    steps: usize,
    out: *mut HsfmPrediction,
    out_len: usize,
) -> HsfmStatus {
    guard(|| {
        let snap = build_scene(deref(scene, "scene")?)?;
        let p = &deref(params, "params")?.0;
        let net = &deref(net, "net")?.0;
        if !(var0_x >= 0.0 && var0_y >= 0.0 && var0_x.is_finite() && var0_y.is_finite()) {
            return Err(fail(
                HsfmStatus::InvalidArgument,
                "initial variances must be >= 0",
            ));
        }
        let out = out_slice(out, out_len, steps + 1)?;
        let r = signn_rollout([var0_x, var0_y], &snap, id, p, net, steps)?;
        for (slot, s) in out.iter_mut().zip(&r) {
            *slot = prediction(s.mean, &Mat::diag(&s.variance));
        }
        Ok(())
    })
}

/// Mahalanobis distance of the error `(ex, ey)` under a 2x2 covariance.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsfm_mahalanobis(
    ex: f64,
    ey: f64,
    cov_xx: f64,
    cov_xy: f64,
    cov_yy: f64,
    out: *mut f64,
) -> HsfmStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HsfmStatus::NullPointer, "out is null"));
        }
        let cov = Mat::from_rows(&[[cov_xx, cov_xy], [cov_xy, cov_yy]])?;
        *out = mahalanobis(Vec2::try_new(ex, ey)?, &cov)?;
        Ok(())
    })
}
