//! Trajectory ingestion: parsing `frame_id ped_id x y` files, resampling onto
//! the 0.2 s grid, cutting observation/prediction windows and deriving the
//! ground-truth covariance proxy used as the network's training target.

use std::fmt::Write as _;
use std::path::Path;

use crate::covnet::{CovNetInput, Sample};
use crate::error::{Error, Result};
use crate::hsfm::{rollout, Agent, AgentId, Goal, HsfmParams, SceneSnapshot};
use crate::linalg::{Mat, Vec2};
use crate::state::AgentState;

/// Prediction grid spacing (s).
pub const GRID_DT: f64 = 0.2;

/// Desired speeds derived from observations are clamped into this range (m/s).
pub const DESIRED_SPEED_RANGE: (f64, f64) = (0.1, 2.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub frame_id: i64,
    pub ped_id: i64,
    /// m
    pub position: Vec2,
}

fn parse_integral(tok: &str) -> Option<i64> {
    tok.parse::<i64>().ok().or_else(|| {
        let v: f64 = tok.parse().ok()?;
        (v.fract() == 0.0 && v.abs() < 9e15).then_some(v as i64)
    })
}

/// Parses whitespace-separated `frame_id ped_id x y` lines; `#` lines and
/// blank lines are skipped. Ids may be written as integral floats (`780.0`).
pub fn parse_trajectories_str(text: &str, path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected 4 fields `frame_id ped_id x y`, found {}",
                    fields.len()
                ),
            ));
        }
        let frame_id = parse_integral(fields[0]).ok_or_else(|| {
            Error::parse(path, lineno, format!("invalid frame id `{}`", fields[0]))
        })?;
        let ped_id = parse_integral(fields[1]).ok_or_else(|| {
            Error::parse(
                path,
                lineno,
                format!("invalid pedestrian id `{}`", fields[1]),
            )
        })?;
        let coord = |tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, lineno, format!("invalid coordinate `{tok}`")))
        };
        out.push(TrajectoryRecord {
            frame_id,
            ped_id,
            position: Vec2::new(coord(fields[2])?, coord(fields[3])?),
        });
    }
    Ok(out)
}

pub fn parse_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories_str(&text, path)
}

/// Inverse of [`parse_trajectories_str`], one record per line.
pub fn write_trajectories(records: &[TrajectoryRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(
            s,
            "{} {} {:?} {:?}",
            r.frame_id, r.ped_id, r.position.x, r.position.y
        );
    }
    s
}

/// One pedestrian's positions on the global grid `t = step · dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PedSeries {
    pub ped_id: i64,
    pub start_step: i64,
    pub positions: Vec<Vec2>,
}

impl PedSeries {
    pub fn end_step(&self) -> i64 {
        self.start_step + self.positions.len() as i64 - 1
    }

    pub fn at(&self, step: i64) -> Option<Vec2> {
        if step < self.start_step {
            return None;
        }
        self.positions
            .get((step - self.start_step) as usize)
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedPed {
    pub ped_id: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Resampled {
    /// Sorted by pedestrian id.
    pub series: Vec<PedSeries>,
    pub skipped: Vec<SkippedPed>,
}

impl Resampled {
    /// `skipped ped <id>: <reason>` lines.
    pub fn skip_report(&self) -> Vec<String> {
        self.skipped
            .iter()
            .map(|s| format!("skipped ped {}: {}", s.ped_id, s.reason))
            .collect()
    }
}

/// Linear interpolation of each pedestrian's positions onto the `target_dt`
/// grid covering its observed interval. Record time is `frame_id · source_dt`.
pub fn resample(records: &[TrajectoryRecord], source_dt: f64, target_dt: f64) -> Result<Resampled> {
    if !(source_dt > 0.0 && target_dt > 0.0) {
        return Err(Error::InvalidArgument(
            "resample time steps must be > 0".into(),
        ));
    }
    let mut ids: Vec<i64> = records.iter().map(|r| r.ped_id).collect();
    ids.sort_unstable();
    ids.dedup();

    let mut out = Resampled::default();
    for id in ids {
        let track: Vec<(f64, Vec2)> = records
            .iter()
            .filter(|r| r.ped_id == id)
            .map(|r| (r.frame_id as f64 * source_dt, r.position))
            .collect();
        if track.len() < 2 {
            out.skipped.push(SkippedPed {
                ped_id: id,
                reason: "single frame".into(),
            });
            continue;
        }
        if let Some(w) = track.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::Data(format!(
                "pedestrian {id}: frames not strictly increasing at t = {} s",
                w[1].0
            )));
        }
        let (t_first, t_last) = (track[0].0, track[track.len() - 1].0);
        let first = (t_first / target_dt - 1e-9).ceil() as i64;
        let last = (t_last / target_dt + 1e-9).floor() as i64;
        if last < first {
            out.skipped.push(SkippedPed {
                ped_id: id,
                reason: "no grid point inside the observed interval".into(),
            });
            continue;
        }
        let mut seg = 0;
        let positions = (first..=last)
            .map(|k| {
                let t = k as f64 * target_dt;
                while seg + 2 < track.len() && track[seg + 1].0 < t {
                    seg += 1;
                }
                let (t0, p0) = track[seg];
                let (t1, p1) = track[seg + 1];
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                if w == 0.0 {
                    p0
                } else if w == 1.0 {
                    p1
                } else {
                    p0 + (p1 - p0) * w
                }
            })
            .collect();
        out.series.push(PedSeries {
            ped_id: id,
            start_step: first,
            positions,
        });
    }
    Ok(out)
}

/// Grid sample with its global step index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedState {
    pub step: i64,
    /// s
    pub t: f64,
    pub state: AgentState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPosition {
    pub step: i64,
    pub t: f64,
    pub position: Vec2,
}

/// Observed kinematics of a co-present agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTrack {
    pub ped_id: i64,
    pub observed: Vec<TimedState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWindow {
    pub ped_id: i64,
    pub observed: Vec<TimedState>,
    pub future: Vec<TimedPosition>,
    pub neighbors: Vec<NeighborTrack>,
    /// Velocity at the last observed step (m/s).
    pub v1: Vec2,
    /// Grid spacing (s).
    pub dt: f64,
}

/// Velocities by central differences (one-sided at the ends), heading from
/// the velocity direction, holding the previous heading while at rest.
/// Observed angular rates are set to zero.
pub fn kinematics(positions: &[Vec2], dt: f64) -> Vec<AgentState> {
    let n = positions.len();
    let mut out = Vec::with_capacity(n);
    let mut heading = 0.0;
    for i in 0..n {
        let velocity = if n < 2 {
            Vec2::ZERO
        } else if i == 0 {
            (positions[1] - positions[0]) * (1.0 / dt)
        } else if i == n - 1 {
            (positions[n - 1] - positions[n - 2]) * (1.0 / dt)
        } else {
            (positions[i + 1] - positions[i - 1]) * (0.5 / dt)
        };
        if velocity.norm() > 1e-6 {
            heading = velocity.y.atan2(velocity.x);
        }
        out.push(AgentState {
            position: positions[i],
            velocity,
            heading,
            angular_rate: 0.0,
        });
    }
    out
}

fn timed(start: i64, dt: f64, states: Vec<AgentState>) -> Vec<TimedState> {
    states
        .into_iter()
        .enumerate()
        .map(|(i, state)| {
            let step = start + i as i64;
            TimedState {
                step,
                t: step as f64 * dt,
                state,
            }
        })
        .collect()
}

/// Sliding windows over every pedestrian continuously present for
/// `n_obs + n_pred` grid steps. Neighbors are the other pedestrians present
/// at the last observed step with at least two samples inside the observed
/// span. Output order: series order, then start step.
pub fn build_windows(
    series: &[PedSeries],
    n_obs: usize,
    n_pred: usize,
    stride: usize,
    dt: f64,
) -> Result<Vec<PredictionWindow>> {
    if n_obs == 0 || n_pred == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "n_obs, n_pred and stride must be >= 1".into(),
        ));
    }
    let span = n_obs + n_pred;
    let mut out = Vec::new();
    for ped in series {
        if ped.positions.len() < span {
            continue;
        }
        for offset in (0..=ped.positions.len() - span).step_by(stride) {
            let obs_start = ped.start_step + offset as i64;
            let obs_end = obs_start + n_obs as i64 - 1;
            let obs_pos = &ped.positions[offset..offset + n_obs];
            let observed = timed(obs_start, dt, kinematics(obs_pos, dt));
            let future = ped.positions[offset + n_obs..offset + span]
                .iter()
                .enumerate()
                .map(|(i, &position)| {
                    let step = obs_end + 1 + i as i64;
                    TimedPosition {
                        step,
                        t: step as f64 * dt,
                        position,
                    }
                })
                .collect();
            let neighbors = series
                .iter()
                .filter(|o| o.ped_id != ped.ped_id && o.at(obs_end).is_some())
                .filter_map(|o| {
                    let from = o.start_step.max(obs_start);
                    let pos: Vec<Vec2> = (from..=obs_end).filter_map(|k| o.at(k)).collect();
                    (pos.len() >= 2).then(|| NeighborTrack {
                        ped_id: o.ped_id,
                        observed: timed(from, dt, kinematics(&pos, dt)),
                    })
                })
                .collect();
            let v1 = observed[n_obs - 1].state.velocity;
            out.push(PredictionWindow {
                ped_id: ped.ped_id,
                observed,
                future,
                neighbors,
                v1,
                dt,
            });
        }
    }
    Ok(out)
}

/// Mean velocity over an observed track: net displacement over elapsed time.
fn mean_velocity(observed: &[TimedState], dt: f64) -> Vec2 {
    match (observed.first(), observed.last()) {
        (Some(a), Some(b)) if b.step > a.step => {
            (b.state.position - a.state.position) * (1.0 / ((b.step - a.step) as f64 * dt))
        }
        _ => Vec2::ZERO,
    }
}

fn scene_agent(id: i64, observed: &[TimedState], horizon_s: f64, dt: f64) -> Agent {
    let last = observed.last().expect("non-empty track").state;
    let mean_v = mean_velocity(observed, dt);
    let (lo, hi) = DESIRED_SPEED_RANGE;
    Agent {
        id: id as AgentId,
        state: last,
        goal: Goal {
            target: last.position + mean_v * horizon_s,
        },
        desired_speed: mean_v.norm().clamp(lo, hi),
    }
}

impl PredictionWindow {
    pub fn n_obs(&self) -> usize {
        self.observed.len()
    }

    pub fn n_pred(&self) -> usize {
        self.future.len()
    }

    pub fn last_observed(&self) -> &TimedState {
        self.observed.last().expect("windows have n_obs >= 1")
    }

    pub fn agent_id(&self) -> AgentId {
        self.ped_id as AgentId
    }

    /// Scene at the last observed step. Goals extrapolate each agent's mean
    /// observed velocity over the prediction horizon; desired speed is that
    /// velocity's magnitude, clamped.
    pub fn scene(&self) -> Result<SceneSnapshot> {
        let horizon = self.n_pred() as f64 * self.dt;
        let mut agents = vec![scene_agent(self.ped_id, &self.observed, horizon, self.dt)];
        agents.extend(
            self.neighbors
                .iter()
                .map(|n| scene_agent(n.ped_id, &n.observed, horizon, self.dt)),
        );
        SceneSnapshot::new(agents, self.last_observed().t)
    }
}

/// Isotropic proxy `‖x̃₁ + H·v₁ − x̃_H‖² · I₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTarget {
    /// s
    pub horizon: f64,
    pub sigma_bar: Mat,
}

impl CovTarget {
    pub fn scalar(&self) -> f64 {
        self.sigma_bar[(0, 0)]
    }
}

pub fn gt_covariance(window: &PredictionWindow, h_steps: usize) -> Result<CovTarget> {
    if h_steps == 0 || h_steps > window.n_pred() {
        return Err(Error::InvalidArgument(format!(
            "horizon step {h_steps} outside 1..={}",
            window.n_pred()
        )));
    }
    let horizon = h_steps as f64 * window.dt;
    let x1 = window.last_observed().state.position;
    let xh = window.future[h_steps - 1].position;
    let s = (x1 + window.v1 * horizon - xh).norm_sq();
    Ok(CovTarget {
        horizon,
        sigma_bar: Mat::diag(&[s, s]),
    })
}

/// One training sample per (window, horizon step). Inputs follow the HSFM
/// mean rollout; the incoming variance is the previous step's target
/// (`sigma0` before the first layer).
pub fn build_covnet_dataset(
    windows: &[PredictionWindow],
    hsfm: &HsfmParams,
    sigma0: [f64; 2],
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(windows.len() * windows.first().map_or(0, |w| w.n_pred()));
    for w in windows {
        let scene = w.scene()?;
        let ego = scene.index_of(w.agent_id())?;
        let states: Vec<AgentState> = rollout(&scene, hsfm, w.n_pred())
            .iter()
            .map(|s| s.agents()[ego].state)
            .collect();
        let mut incoming = sigma0;
        for h in 1..=w.n_pred() {
            let s = gt_covariance(w, h)?.scalar();
            out.push(Sample {
                input: CovNetInput::new(&states[h - 1], incoming, states[h].position),
                target: [s, s],
            });
            incoming = [s, s];
        }
    }
    Ok(out)
}
