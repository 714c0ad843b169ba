//! Agent kinematic state and Gaussian beliefs over it.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{is_psd, Mat, Vec2};

/// Flattened state dimension: x, y, vx, vy, heading, angular rate.
pub const STATE_DIM: usize = 6;

/// Wraps an angle into (-π, π]. Values already in range are returned untouched.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// One pedestrian in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    /// m
    pub position: Vec2,
    /// m/s
    pub velocity: Vec2,
    /// rad, in (-π, π]
    pub heading: f64,
    /// rad/s
    pub angular_rate: f64,
}

impl AgentState {
    /// Builds a state, normalizing the heading and rejecting non-finite values.
    pub fn new(position: Vec2, velocity: Vec2, heading: f64, angular_rate: f64) -> Result<Self> {
        if !(position.is_finite()
            && velocity.is_finite()
            && heading.is_finite()
            && angular_rate.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite agent state".into()));
        }
        Ok(AgentState {
            position,
            velocity,
            heading: normalize_angle(heading),
            angular_rate,
        })
    }

    /// A state at rest, facing `heading`.
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        AgentState {
            position,
            velocity: Vec2::ZERO,
            heading: normalize_angle(heading),
            angular_rate: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.heading.is_finite()
            && self.angular_rate.is_finite()
    }

    /// Component order: x, y, vx, vy, heading, angular rate.
    pub fn flatten(&self) -> [f64; STATE_DIM] {
        [
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
            self.heading,
            self.angular_rate,
        ]
    }

    pub fn unflatten(v: &[f64]) -> Result<Self> {
        if v.len() != STATE_DIM {
            return Err(Error::Dimension(format!(
                "state vector has {} components, expected {STATE_DIM}",
                v.len()
            )));
        }
        AgentState::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]), v[4], v[5])
    }
}

/// `x ~ N(mean, covariance)` over the flattened 6-dimensional state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: AgentState,
    pub covariance: Mat,
}

impl GaussianBelief {
    pub fn new(mean: AgentState, covariance: Mat) -> Result<Self> {
        if covariance.rows() != STATE_DIM || covariance.cols() != STATE_DIM {
            return Err(Error::Dimension(format!(
                "belief covariance must be {STATE_DIM}x{STATE_DIM}, got {}x{}",
                covariance.rows(),
                covariance.cols()
            )));
        }
        if !covariance.is_symmetric(1e-9) {
            return Err(Error::InvalidArgument(
                "belief covariance is not symmetric".into(),
            ));
        }
        if !is_psd(&covariance, 1e-9) {
            return Err(Error::Numerical("belief covariance is not PSD".into()));
        }
        Ok(GaussianBelief { mean, covariance })
    }

    /// Independent per-component standard deviations.
    pub fn diagonal(mean: AgentState, pos_std: f64, vel_std: f64, heading_std: f64) -> Self {
        let (p, v, h) = (
            pos_std * pos_std,
            vel_std * vel_std,
            heading_std * heading_std,
        );
        GaussianBelief {
            mean,
            covariance: Mat::diag(&[p, p, v, v, h, 0.0]),
        }
    }

    /// 2x2 position block.
    pub fn position_covariance(&self) -> Mat {
        self.covariance.diag_block(0, 2)
    }
}
