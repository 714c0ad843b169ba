//! Headed social force transition function and its stacking into a
//! multi-step prediction network.
//!
//! One layer maps the scene at `t` to `t + dt`:
//!
//! 1. world-frame net force = goal attraction + anisotropic exponential
//!    repulsion from every other agent,
//! 2. the force is projected onto the agent's body frame (forward along the
//!    heading, sideward a quarter turn to the left),
//! 3. forward force accelerates along the heading with gain `forward_gain`,
//!    sideward force accelerates laterally and produces a heading torque with
//!    gain `sideward_gain`, angular dynamics
//!    `ω̇ = (sideward_gain·f_side − angular_damping·ω) / heading_inertia`,
//! 4. semi-implicit Euler: velocity then position, angular rate then heading.
//!
//! All forces are mass-normalized (m/s²).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::state::{normalize_angle, AgentState};

/// Distances below this are treated as coincident agents (m).
const COINCIDENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsfmParams {
    /// τ, s
    pub relaxation_time: f64,
    /// Fallback desired speed for agents without their own, m/s.
    pub desired_speed: f64,
    /// A, m/s²
    pub repulsion_strength: f64,
    /// B, m
    pub repulsion_range: f64,
    /// λ in [0, 1]; 1 is isotropic.
    pub anisotropy: f64,
    /// Sum of two body radii, m.
    pub combined_radius: f64,
    pub forward_gain: f64,
    pub sideward_gain: f64,
    pub angular_damping: f64,
    pub heading_inertia: f64,
    /// Δt, s
    pub dt: f64,
    /// m
    pub goal_radius: f64,
}

impl Default for HsfmParams {
    fn default() -> Self {
        HsfmParams {
            relaxation_time: 0.5,
            desired_speed: 1.3,
            repulsion_strength: 2.1,
            repulsion_range: 0.3,
            anisotropy: 0.4,
            combined_radius: 0.6,
            forward_gain: 1.0,
            sideward_gain: 1.0,
            angular_damping: 0.5,
            heading_inertia: 1.0,
            dt: 0.2,
            goal_radius: 0.3,
        }
    }
}

impl HsfmParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.relaxation_time,
            self.desired_speed,
            self.repulsion_strength,
            self.repulsion_range,
            self.anisotropy,
            self.combined_radius,
            self.forward_gain,
            self.sideward_gain,
            self.angular_damping,
            self.heading_inertia,
            self.dt,
            self.goal_radius,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("hsfm parameters must be finite".into()));
        }
        let checks = [
            (self.relaxation_time > 0.0, "relaxation_time must be > 0"),
            (self.repulsion_range > 0.0, "repulsion_range must be > 0"),
            (self.dt > 0.0, "dt must be > 0"),
            (
                (0.0..=1.0).contains(&self.anisotropy),
                "anisotropy must lie in [0, 1]",
            ),
            (self.goal_radius >= 0.0, "goal_radius must be >= 0"),
            (self.heading_inertia > 0.0, "heading_inertia must be > 0"),
            (self.desired_speed >= 0.0, "desired_speed must be >= 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(format!("hsfm: {msg}"))),
            None => Ok(()),
        }
    }

    /// Gains that turn the transition into pure constant-velocity motion:
    /// no force reaches the state and the angular rate is undamped.
    pub fn constant_velocity(dt: f64) -> Self {
        HsfmParams {
            forward_gain: 0.0,
            sideward_gain: 0.0,
            angular_damping: 0.0,
            repulsion_strength: 0.0,
            dt,
            ..HsfmParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub target: Vec2,
}

/// Mass-normalized force, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceVector {
    pub net: Vec2,
}

pub type AgentId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub state: AgentState,
    pub goal: Goal,
    /// m/s
    pub desired_speed: f64,
}

/// All agents and their goals at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    agents: Vec<Agent>,
    /// s
    pub timestamp: f64,
}

impl SceneSnapshot {
    pub fn new(agents: Vec<Agent>, timestamp: f64) -> Result<Self> {
        for (i, a) in agents.iter().enumerate() {
            if agents[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate agent id {}",
                    a.id
                )));
            }
            if !a.state.is_finite() || !a.goal.target.is_finite() || !a.desired_speed.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "agent {} is not finite",
                    a.id
                )));
            }
        }
        Ok(SceneSnapshot { agents, timestamp })
    }

    pub fn empty(timestamp: f64) -> Self {
        SceneSnapshot {
            agents: Vec::new(),
            timestamp,
        }
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn index_of(&self, id: AgentId) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("agent {id} not in scene")))
    }

    pub fn agent(&self, id: AgentId) -> Result<&Agent> {
        Ok(&self.agents[self.index_of(id)?])
    }

    /// Same scene with agent states replaced; goals, speeds and ids kept.
    pub fn with_states(&self, states: &[AgentState]) -> Result<Self> {
        if states.len() != self.agents.len() {
            return Err(Error::Dimension(format!(
                "{} states for {} agents",
                states.len(),
                self.agents.len()
            )));
        }
        let agents = self
            .agents
            .iter()
            .zip(states)
            .map(|(a, s)| Agent {
                state: *s,
                ..a.clone()
            })
            .collect();
        Ok(SceneSnapshot {
            agents,
            timestamp: self.timestamp,
        })
    }
}

/// `(v_des·ê_goal − v) / τ`; the desired velocity is zero inside the goal radius.
pub fn goal_force(
    state: &AgentState,
    goal: &Goal,
    desired_speed: f64,
    params: &HsfmParams,
) -> ForceVector {
    let to_goal = goal.target - state.position;
    let dist = to_goal.norm();
    let desired = if dist <= params.goal_radius || dist == 0.0 {
        Vec2::ZERO
    } else {
        to_goal * (desired_speed / dist)
    };
    ForceVector {
        net: (desired - state.velocity) * (1.0 / params.relaxation_time),
    }
}

/// Facing direction used for anisotropy: velocity if moving, heading otherwise.
fn facing(state: &AgentState) -> Vec2 {
    let speed = state.velocity.norm();
    if speed > 1e-9 {
        state.velocity * (1.0 / speed)
    } else {
        Vec2::from_angle(state.heading)
    }
}

/// Repulsion exerted on `this` by `other`:
/// `A·exp((r − d)/B)·w(φ)·ê_away`, `w(φ) = λ + (1 − λ)(1 + cos φ)/2`.
pub fn repulsion_force(this: &AgentState, other: &AgentState, params: &HsfmParams) -> ForceVector {
    let diff = this.position - other.position;
    let d = diff.norm();
    let away = if d < COINCIDENT_EPS {
        Vec2::new(1.0, 0.0)
    } else {
        diff * (1.0 / d)
    };
    let cos_phi = facing(this).dot(-away);
    let lambda = params.anisotropy;
    let w = lambda + (1.0 - lambda) * 0.5 * (1.0 + cos_phi);
    let magnitude =
        params.repulsion_strength * ((params.combined_radius - d) / params.repulsion_range).exp();
    ForceVector {
        net: away * (magnitude * w),
    }
}

/// Net force on agent `index` if its state were `ego`, others at their scene states.
pub fn net_force(
    scene: &SceneSnapshot,
    index: usize,
    ego: &AgentState,
    params: &HsfmParams,
) -> ForceVector {
    let me = &scene.agents[index];
    let mut net = goal_force(ego, &me.goal, me.desired_speed, params).net;
    for (j, other) in scene.agents.iter().enumerate() {
        if j != index {
            net = net + repulsion_force(ego, &other.state, params).net;
        }
    }
    ForceVector { net }
}

/// Integrates one agent for one layer given the net force acting on it.
pub fn integrate(state: &AgentState, force: ForceVector, params: &HsfmParams) -> AgentState {
    let forward = Vec2::from_angle(state.heading);
    let side = forward.perp();
    let f_fwd = force.net.dot(forward);
    let f_side = force.net.dot(side);
    let accel = forward * (params.forward_gain * f_fwd) + side * (params.sideward_gain * f_side);
    let velocity = state.velocity + accel * params.dt;
    let alpha = (params.sideward_gain * f_side - params.angular_damping * state.angular_rate)
        / params.heading_inertia;
    let angular_rate = state.angular_rate + alpha * params.dt;
    AgentState {
        position: state.position + velocity * params.dt,
        velocity,
        heading: normalize_angle(state.heading + angular_rate * params.dt),
        angular_rate,
    }
}

/// Next state of agent `index` if its current state were `ego` (neighbors fixed).
pub fn transition(
    scene: &SceneSnapshot,
    index: usize,
    ego: &AgentState,
    params: &HsfmParams,
) -> AgentState {
    integrate(ego, net_force(scene, index, ego, params), params)
}

/// One transition layer applied synchronously to every agent.
pub fn hsfm_step(scene: &SceneSnapshot, params: &HsfmParams) -> SceneSnapshot {
    let agents = scene
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| Agent {
            state: transition(scene, i, &a.state, params),
            ..a.clone()
        })
        .collect();
    SceneSnapshot {
        agents,
        timestamp: scene.timestamp + params.dt,
    }
}

/// `steps` stacked layers; the result has `steps + 1` snapshots, input first.
pub fn rollout(scene: &SceneSnapshot, params: &HsfmParams, steps: usize) -> Vec<SceneSnapshot> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(scene.clone());
    for _ in 0..steps {
        let next = hsfm_step(out.last().expect("non-empty"), params);
        out.push(next);
    }
    out
}
