//! Pedestrian trajectory prediction with stacked headed-social-force layers
//! and three ways of carrying position uncertainty through the stack:
//! first-order forward propagation, Monte-Carlo sampling and a small learned
//! covariance network applied per layer.

pub mod config;
pub mod covnet;
pub mod data;
pub mod error;
pub mod eval;
pub mod hsfm;
pub mod linalg;
pub mod pipeline;
pub mod scenegen;
pub mod state;
pub mod uncertainty;

pub use error::{Error, Result};
pub use hsfm::{hsfm_step, rollout, Agent, AgentId, Goal, HsfmParams, SceneSnapshot};
pub use linalg::{Mat, Vec2};
pub use state::{AgentState, GaussianBelief};
