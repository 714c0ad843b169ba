//! Covariance estimation over the stacked transition layers.
//!
//! * Forward propagation linearizes each layer at the current mean with a
//!   central-difference Jacobian `G` and pushes the belief through
//!   `Σ ← G Σ Gᵀ`. Neighbors are held at their means and carry no covariance.
//! * Monte-Carlo draws whole-scene initial states, rolls every draw through
//!   the nonlinear dynamics and reports the ego agent's position sample
//!   mean and unbiased sample covariance per layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsfm::{hsfm_step, rollout, transition, AgentId, HsfmParams, SceneSnapshot};
use crate::linalg::{congruence, symmetric_eigenvalues, Mat, Vec2};
use crate::state::{normalize_angle, AgentState, GaussianBelief, STATE_DIM};

/// Central-difference step per state component (m, m, m/s, m/s, rad, rad/s).
pub const DEFAULT_FD_EPS: [f64; STATE_DIM] = [1e-5; STATE_DIM];

/// Most negative eigenvalue tolerated in a propagated covariance.
const PSD_FAILURE_TOL: f64 = 1e-6;

/// Linearization of one layer around `at_mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub g: Mat,
    pub at_mean: AgentState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// m
    pub init_pos_std: f64,
    /// m/s
    pub init_vel_std: f64,
    /// rad
    pub init_heading_std: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_samples: 1000,
            seed: 0,
            init_pos_std: 0.05,
            init_vel_std: 0.1,
            init_heading_std: 0.05,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_samples must be at least 2, got {}",
                self.n_samples
            )));
        }
        let stds = [self.init_pos_std, self.init_vel_std, self.init_heading_std];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument(
                "initial standard deviations must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Initial belief used by forward propagation, matching the sampling distribution.
    pub fn initial_belief(&self, mean: AgentState) -> GaussianBelief {
        GaussianBelief::diagonal(
            mean,
            self.init_pos_std,
            self.init_vel_std,
            self.init_heading_std,
        )
    }
}

/// Per-layer Monte-Carlo statistics of the ego position.
#[derive(Debug, Clone, PartialEq)]
pub struct McStep {
    pub mean: Vec2,
    pub cov2: Mat,
}

fn scene_with_ego(scene: &SceneSnapshot, index: usize, ego: &AgentState) -> Result<SceneSnapshot> {
    let mut states: Vec<AgentState> = scene.agents().iter().map(|a| a.state).collect();
    states[index] = *ego;
    scene.with_states(&states)
}

fn state_delta(plus: &[f64; STATE_DIM], minus: &[f64; STATE_DIM], k: usize) -> f64 {
    if k == 4 {
        normalize_angle(plus[k] - minus[k])
    } else {
        plus[k] - minus[k]
    }
}

/// `G[i][j] = (T(x + eps_j)_i − T(x − eps_j)_i) / (2 eps_j)` over the agent's own
/// state, neighbors frozen.
pub fn jacobian_fd(
    scene: &SceneSnapshot,
    agent_id: AgentId,
    params: &HsfmParams,
    eps: &[f64; STATE_DIM],
) -> Result<Jacobian> {
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {bad}"
        )));
    }
    let index = scene.index_of(agent_id)?;
    let at_mean = scene.agents()[index].state;
    let x0 = at_mean.flatten();
    let mut g = Mat::zeros(STATE_DIM, STATE_DIM);
    for j in 0..STATE_DIM {
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += eps[j];
        xm[j] -= eps[j];
        let tp = transition(scene, index, &AgentState::unflatten(&xp)?, params).flatten();
        let tm = transition(scene, index, &AgentState::unflatten(&xm)?, params).flatten();
        for i in 0..STATE_DIM {
            g[(i, j)] = state_delta(&tp, &tm, i) / (2.0 * eps[j]);
        }
    }
    if !g.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite Jacobian for agent {agent_id}"
        )));
    }
    Ok(Jacobian { g, at_mean })
}

fn check_psd(cov: &Mat) -> Result<()> {
    let min = symmetric_eigenvalues(cov)?.first().copied().unwrap_or(0.0);
    if min < -PSD_FAILURE_TOL || !cov.is_finite() {
        return Err(Error::Numerical(format!(
            "propagated covariance has eigenvalue {min:e}"
        )));
    }
    Ok(())
}

/// One layer of forward propagation: `N(T(μ), G Σ Gᵀ)`.
///
/// The ego agent's entry in `scene` is replaced by `belief.mean`.
pub fn fp_step(
    belief: &GaussianBelief,
    scene: &SceneSnapshot,
    agent_id: AgentId,
    params: &HsfmParams,
) -> Result<GaussianBelief> {
    let index = scene.index_of(agent_id)?;
    let at_mean = scene_with_ego(scene, index, &belief.mean)?;
    let jac = jacobian_fd(&at_mean, agent_id, params, &DEFAULT_FD_EPS)?;
    let mean = transition(&at_mean, index, &belief.mean, params);
    let covariance = congruence(&jac.g, &belief.covariance)?;
    check_psd(&covariance)?;
    Ok(GaussianBelief { mean, covariance })
}

/// Repeated [`fp_step`], re-linearizing at every new mean. Neighbors follow
/// their own mean dynamics. Returns `steps + 1` beliefs.
pub fn fp_rollout(
    belief0: &GaussianBelief,
    scene: &SceneSnapshot,
    agent_id: AgentId,
    params: &HsfmParams,
    steps: usize,
) -> Result<Vec<GaussianBelief>> {
    let index = scene.index_of(agent_id)?;
    let mut current = scene_with_ego(scene, index, &belief0.mean)?;
    let mut beliefs = Vec::with_capacity(steps + 1);
    beliefs.push(belief0.clone());
    for _ in 0..steps {
        let next = fp_step(
            beliefs.last().expect("non-empty"),
            &current,
            agent_id,
            params,
        )?;
        current = hsfm_step(&current, params);
        debug_assert_eq!(current.agents()[index].state, next.mean);
        beliefs.push(next);
    }
    Ok(beliefs)
}

/// Independent stream for sample `index`: same seed, distinct ChaCha stream.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn perturb_scene(
    scene: &SceneSnapshot,
    cfg: &McConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SceneSnapshot> {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let states = scene
        .agents()
        .iter()
        .map(|a| {
            let s = a.state;
            let position = s.position + Vec2::new(normal(), normal()) * cfg.init_pos_std;
            let velocity = s.velocity + Vec2::new(normal(), normal()) * cfg.init_vel_std;
            let heading = s.heading + normal() * cfg.init_heading_std;
            AgentState::new(position, velocity, heading, s.angular_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    scene.with_states(&states)
}

/// Sample mean and unbiased sample covariance of 2D points, accumulated in
/// slice order around the first point.
pub fn sample_statistics(points: &[Vec2]) -> Result<(Vec2, Mat)> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample covariance needs at least 2 points, got {n}"
        )));
    }
    let pivot = points[0];
    let mut sum = Vec2::ZERO;
    for p in points {
        sum = sum + (*p - pivot);
    }
    let centered_mean = sum * (1.0 / n as f64);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - pivot - centered_mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let denom = (n - 1) as f64;
    let cov = Mat::from_row_major(
        2,
        2,
        vec![sxx / denom, sxy / denom, sxy / denom, syy / denom],
    )?;
    Ok((pivot + centered_mean, cov))
}

/// Monte-Carlo estimate of the ego position distribution for layers `0..=steps`.
///
/// Samples run in parallel; each one owns its RNG stream and the reduction
/// happens in sample order, so results do not depend on the thread count.
pub fn mc_estimate(
    scene: &SceneSnapshot,
    agent_id: AgentId,
    params: &HsfmParams,
    cfg: &McConfig,
    steps: usize,
) -> Result<Vec<McStep>> {
    cfg.validate()?;
    let index = scene.index_of(agent_id)?;
    let tracks: Vec<Vec<Vec2>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let start = perturb_scene(scene, cfg, &mut rng)?;
            Ok(rollout(&start, params, steps)
                .iter()
                .map(|s| s.agents()[index].state.position)
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(steps + 1);
    let mut column = Vec::with_capacity(cfg.n_samples);
    for k in 0..=steps {
        column.clear();
        column.extend(tracks.iter().map(|t| t[k]));
        let (mean, cov2) = sample_statistics(&column)?;
        out.push(McStep { mean, cov2 });
    }
    Ok(out)
}
