//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hsfm_signn::config::RunConfig;
use hsfm_signn::covnet::{CovNetInput, CovNetParams, Sample};
use hsfm_signn::scenegen::{write_synthetic_dataset, FRAME_DT};
use hsfm_signn::{Agent, AgentState, Goal, HsfmParams, Mat, SceneSnapshot, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn agent(id: u64, state: AgentState, goal: Vec2, desired_speed: f64) -> Agent {
    Agent {
        id,
        state,
        goal: Goal { target: goal },
        desired_speed,
    }
}

pub fn state(x: f64, y: f64, vx: f64, vy: f64, heading: f64, omega: f64) -> AgentState {
    AgentState::new(Vec2::new(x, y), Vec2::new(vx, vy), heading, omega).unwrap()
}

/// Isolated agent well away from its goal, with unequal gains so that
/// every block of the Jacobian is exercised.
pub fn random_isolated(r: &mut ChaCha8Rng) -> (SceneSnapshot, HsfmParams) {
    let s = state(
        r.random_range(-5.0..5.0),
        r.random_range(-5.0..5.0),
        r.random_range(-1.5..1.5),
        r.random_range(-1.5..1.5),
        r.random_range(-3.0..3.0),
        r.random_range(-0.5..0.5),
    );
    let goal = s.position + Vec2::from_angle(r.random_range(-3.1..3.1)) * r.random_range(3.0..10.0);
    let params = HsfmParams {
        forward_gain: r.random_range(0.5..1.5),
        sideward_gain: r.random_range(0.3..1.2),
        angular_damping: r.random_range(0.1..1.0),
        heading_inertia: r.random_range(0.5..2.0),
        relaxation_time: r.random_range(0.3..1.0),
        ..HsfmParams::default()
    };
    let scene = SceneSnapshot::new(vec![agent(1, s, goal, r.random_range(0.5..1.8))], 0.0).unwrap();
    (scene, params)
}

pub fn random_crowd(r: &mut ChaCha8Rng, n: usize) -> SceneSnapshot {
    let agents = (0..n)
        .map(|i| {
            let s = state(
                r.random_range(-3.0..3.0),
                r.random_range(-3.0..3.0),
                r.random_range(-1.2..1.2),
                r.random_range(-1.2..1.2),
                r.random_range(-3.0..3.0),
                r.random_range(-0.3..0.3),
            );
            let goal = Vec2::new(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
            agent(i as u64 + 1, s, goal, r.random_range(0.8..1.6))
        })
        .collect();
    SceneSnapshot::new(agents, 0.0).unwrap()
}

/// Hand-derived Jacobian of one layer for an agent with no neighbors and its
/// goal outside the goal radius. State order x, y, vx, vy, θ, ω.
pub fn analytic_isolated_jacobian(a: &Agent, p: &HsfmParams) -> [[f64; 6]; 6] {
    let s = a.state;
    let dt = p.dt;
    let tau = p.relaxation_time;
    let (kf, ko, c, inertia) = (
        p.forward_gain,
        p.sideward_gain,
        p.angular_damping,
        p.heading_inertia,
    );
    let d = [
        a.goal.target.x - s.position.x,
        a.goal.target.y - s.position.y,
    ];
    let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let u = [d[0] / r, d[1] / r];
    let v = [s.velocity.x, s.velocity.y];
    let force = [
        (a.desired_speed * u[0] - v[0]) / tau,
        (a.desired_speed * u[1] - v[1]) / tau,
    ];
    // dF/dp = -v_des (I - u uᵀ) / (τ r), dF/dv = -I / τ
    let mut df_dp = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            df_dp[i][j] = -a.desired_speed * (delta - u[i] * u[j]) / (tau * r);
        }
    }
    let ef = [s.heading.cos(), s.heading.sin()];
    let eo = [-ef[1], ef[0]];
    // K = k_f e_f e_fᵀ + k_o e_o e_oᵀ, dK/dθ = (k_f − k_o)(e_o e_fᵀ + e_f e_oᵀ)
    let mut k = [[0.0; 2]; 2];
    let mut dk = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            k[i][j] = kf * ef[i] * ef[j] + ko * eo[i] * eo[j];
            dk[i][j] = (kf - ko) * (eo[i] * ef[j] + ef[i] * eo[j]);
        }
    }
    let mut jac = [[0.0; 6]; 6];
    // velocity rows
    for i in 0..2 {
        for j in 0..2 {
            let kdf: f64 = (0..2).map(|m| k[i][m] * df_dp[m][j]).sum();
            jac[2 + i][j] = dt * kdf;
            jac[2 + i][2 + j] = if i == j { 1.0 } else { 0.0 } - dt * k[i][j] / tau;
        }
        jac[2 + i][4] = dt * (0..2).map(|m| dk[i][m] * force[m]).sum::<f64>();
    }
    // angular-rate row
    for j in 0..2 {
        jac[5][j] = dt * ko * (eo[0] * df_dp[0][j] + eo[1] * df_dp[1][j]) / inertia;
        jac[5][2 + j] = -dt * ko * eo[j] / (tau * inertia);
    }
    jac[5][4] = -dt * ko * (ef[0] * force[0] + ef[1] * force[1]) / inertia;
    jac[5][5] = 1.0 - dt * c / inertia;
    // heading row: θ' = θ + Δt ω'
    for j in 0..6 {
        jac[4][j] = dt * jac[5][j] + if j == 4 { 1.0 } else { 0.0 };
    }
    // position rows: p' = p + Δt v'
    for i in 0..2 {
        for j in 0..6 {
            jac[i][j] = dt * jac[2 + i][j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    jac
}

pub fn max_abs_diff(a: &Mat, b: &[[f64; 6]; 6]) -> f64 {
    let mut m = 0.0f64;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((a[(i, j)] - v).abs());
        }
    }
    m
}

/// Straightforward forward pass written from the layer equations, used as
/// a reference for the library's implementation.
pub fn reference_log_variance(p: &CovNetParams, input: &CovNetInput) -> [f64; 2] {
    let x = [
        0.0,
        0.0,
        input.state[2],
        input.state[3],
        input.sigma[0],
        input.sigma[1],
        input.pred[0] - input.state[0],
        input.pred[1] - input.state[1],
    ];
    let layer = |w: &Mat, b: &[f64], x: &[f64], relu: bool| -> Vec<f64> {
        (0..w.rows())
            .map(|i| {
                let mut acc = b[i];
                for j in 0..w.cols() {
                    acc += w[(i, j)] * x[j];
                }
                if relu {
                    acc.max(0.0)
                } else {
                    acc
                }
            })
            .collect()
    };
    let h1 = layer(&p.w1, &p.b1, &x, true);
    let h2 = layer(&p.w2, &p.b2, &h1, true);
    let o = layer(&p.w3, &p.b3, &h2, false);
    [o[0], o[1]]
}

pub fn random_params(r: &mut ChaCha8Rng, scale: f64) -> CovNetParams {
    CovNetParams::uniform(scale, r)
}

pub fn random_sample(r: &mut ChaCha8Rng) -> Sample {
    let x = r.random_range(-5.0..5.0);
    let y = r.random_range(-5.0..5.0);
    Sample {
        input: CovNetInput {
            state: [x, y, r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)],
            sigma: [r.random_range(0.0..2.0), r.random_range(0.0..2.0)],
            pred: [x + r.random_range(-0.4..0.4), y + r.random_range(-0.4..0.4)],
        },
        target: [r.random_range(0.0..3.0), r.random_range(0.0..3.0)],
    }
}

/// F for the constant-velocity layer: positions integrate velocities,
/// heading integrates the angular rate.
pub fn cv_transition(dt: f64) -> Mat {
    let mut f = Mat::identity(6);
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f[(4, 5)] = dt;
    f
}

pub fn mat_pow(m: &Mat, k: usize) -> Mat {
    let mut out = Mat::identity(m.rows());
    for _ in 0..k {
        out = naive_mul(&out, m);
    }
    out
}

pub fn naive_mul(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for k in 0..a.cols() {
                acc += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

pub fn frobenius_diff(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).unwrap().frobenius()
}

/// 1σ/3σ coverage expected from a 2D Gaussian under the Mahalanobis
/// criterion: the chi distribution with two degrees of freedom.
pub fn chi2_coverage_pct(k: f64) -> f64 {
    100.0 * (1.0 - (-k * k / 2.0).exp())
}

/// Per-axis box coverage `(P(|z| ≤ k))²`, integrating the normal density
/// with composite Simpson's rule.
pub fn box_coverage_pct(k: f64) -> f64 {
    let n = 20_000;
    let h = 2.0 * k / n as f64;
    let pdf = |z: f64| (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(-k) + pdf(k);
    for i in 1..n {
        let z = -k + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(z);
    }
    let p = acc * h / 3.0;
    100.0 * p * p
}

/// Five synthetic scenes plus a config in `dir`; `extra` is appended to the
/// config text.
pub fn synthetic_config(dir: &Path, seed: u64, extra: &str) -> (PathBuf, RunConfig) {
    let paths = write_synthetic_dataset(dir, seed).unwrap();
    let names: Vec<String> = paths
        .iter()
        .map(|p| format!("\"{}\"", p.file_name().unwrap().to_string_lossy()))
        .collect();
    let text = format!(
        "seed = {seed}\nout = \"out\"\n{extra}\n[data]\npaths = [{}]\nholdout = \"eth\"\nsource_dt = {FRAME_DT}\n",
        names.join(", ")
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, &text).unwrap();
    let cfg = RunConfig::from_toml_str(&text, dir).unwrap();
    (path, cfg)
}

/// Window whose future is the linear extrapolation from `x1` with velocity
/// `v1` plus the per-step `deviation`.
pub fn window_with_deviation(
    x1: Vec2,
    v1: Vec2,
    deviation: &[Vec2],
) -> hsfm_signn::data::PredictionWindow {
    use hsfm_signn::data::{PredictionWindow, TimedPosition, TimedState};
    let dt = 0.2;
    let observed = (0..8)
        .map(|i| {
            let back = (7 - i) as f64 * dt;
            TimedState {
                step: i,
                t: i as f64 * dt,
                state: AgentState::new(x1 - v1 * back, v1, v1.y.atan2(v1.x), 0.0).unwrap(),
            }
        })
        .collect();
    let future = deviation
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let h = i + 1;
            TimedPosition {
                step: 7 + h as i64,
                t: (7 + h) as f64 * dt,
                position: x1 + v1 * (h as f64 * dt) + *d,
            }
        })
        .collect();
    PredictionWindow {
        ped_id: 1,
        observed,
        future,
        neighbors: Vec::new(),
        v1,
        dt,
    }
}
