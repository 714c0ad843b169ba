//! Per-layer covariance network.
//!
//! A fully connected 8 → 100 → 50 → 2 network with ReLU hidden layers. The
//! final layer emits log-variances of the next position, exponentiated on
//! output, so predicted variances are always strictly positive. One shared
//! set of weights is applied at every transition layer of a rollout.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsfm::{rollout, AgentId, HsfmParams, SceneSnapshot};
use crate::linalg::{Mat, Vec2};
use crate::state::AgentState;

pub const INPUT_DIM: usize = 8;
pub const HIDDEN1: usize = 100;
pub const HIDDEN2: usize = 50;
pub const OUTPUT_DIM: usize = 2;

/// Added to targets before taking logs in the loss (m²).
pub const TARGET_EPS: f64 = 1e-4;

const FORMAT_TAG: &str = "covnet-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CovNetParams {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub b3: Vec<f64>,
}

/// Features of one layer: current state, incoming variances and the
/// model-predicted next position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovNetInput {
    /// x, y, vx, vy
    pub state: [f64; 4],
    /// σ²_x, σ²_y (m²)
    pub sigma: [f64; 2],
    /// predicted next x, y
    pub pred: [f64; 2],
}

impl CovNetInput {
    pub fn new(state: &AgentState, sigma: [f64; 2], pred: Vec2) -> Self {
        CovNetInput {
            state: [
                state.position.x,
                state.position.y,
                state.velocity.x,
                state.velocity.y,
            ],
            sigma,
            pred: [pred.x, pred.y],
        }
    }

    /// Network input with positions re-centered on the current position.
    pub fn features(&self) -> [f64; INPUT_DIM] {
        let [x, y, vx, vy] = self.state;
        [
            0.0,
            0.0,
            vx,
            vy,
            self.sigma[0],
            self.sigma[1],
            self.pred[0] - x,
            self.pred[1] - y,
        ]
    }
}

/// A training pair: input and target variances (m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub input: CovNetInput,
    pub target: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 128,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("train.init_scale must be > 0".into()));
        }
        Ok(())
    }
}

impl CovNetParams {
    pub fn zeros() -> Self {
        CovNetParams {
            w1: Mat::zeros(HIDDEN1, INPUT_DIM),
            b1: vec![0.0; HIDDEN1],
            w2: Mat::zeros(HIDDEN2, HIDDEN1),
            b2: vec![0.0; HIDDEN2],
            w3: Mat::zeros(OUTPUT_DIM, HIDDEN2),
            b3: vec![0.0; OUTPUT_DIM],
        }
    }

    /// Every weight and bias uniform in `[-scale, scale]`.
    pub fn uniform(scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = CovNetParams::zeros();
        for v in p.values_mut() {
            *v = rng.random_range(-scale..=scale);
        }
        p
    }

    fn blocks(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.w3.as_slice(),
            &self.b3,
        ]
    }

    /// All parameters in block order w1, b1, w2, b2, w3, b3.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.blocks().into_iter().flatten()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let CovNetParams {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        } = self;
        w1.as_mut_slice()
            .iter_mut()
            .chain(b1.iter_mut())
            .chain(w2.as_mut_slice().iter_mut())
            .chain(b2.iter_mut())
            .chain(w3.as_mut_slice().iter_mut())
            .chain(b3.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axpy(&mut self, alpha: f64, other: &CovNetParams) {
        for (v, g) in self.values_mut().zip(other.values()) {
            *v += alpha * g;
        }
    }
}

struct Activations {
    z1: [f64; HIDDEN1],
    h1: [f64; HIDDEN1],
    z2: [f64; HIDDEN2],
    h2: [f64; HIDDEN2],
    out: [f64; OUTPUT_DIM],
}

fn dense<const N: usize>(w: &Mat, b: &[f64], x: &[f64], out: &mut [f64; N]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = b[i] + w.row(i).iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

fn activations(params: &CovNetParams, x: &[f64; INPUT_DIM]) -> Activations {
    let mut a = Activations {
        z1: [0.0; HIDDEN1],
        h1: [0.0; HIDDEN1],
        z2: [0.0; HIDDEN2],
        h2: [0.0; HIDDEN2],
        out: [0.0; OUTPUT_DIM],
    };
    dense(&params.w1, &params.b1, x, &mut a.z1);
    for (h, z) in a.h1.iter_mut().zip(&a.z1) {
        *h = z.max(0.0);
    }
    dense(&params.w2, &params.b2, &a.h1, &mut a.z2);
    for (h, z) in a.h2.iter_mut().zip(&a.z2) {
        *h = z.max(0.0);
    }
    dense(&params.w3, &params.b3, &a.h2, &mut a.out);
    a
}

/// Log-variances emitted by the final layer.
pub fn covnet_log_variance(params: &CovNetParams, input: &CovNetInput) -> [f64; 2] {
    activations(params, &input.features()).out
}

/// Predicted next-step position variances `(σ²_x, σ²_y)`, both > 0.
pub fn covnet_forward(params: &CovNetParams, input: &CovNetInput) -> [f64; 2] {
    covnet_log_variance(params, input).map(f64::exp)
}

fn log_target(t: f64) -> f64 {
    (t + TARGET_EPS).ln()
}

fn check_batch(batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(s) = batch
        .iter()
        .find(|s| !(s.target[0] >= 0.0 && s.target[1] >= 0.0))
    {
        return Err(Error::InvalidArgument(format!(
            "negative target {:?}",
            s.target
        )));
    }
    Ok(())
}

/// Mean over the batch of `Σ_axes (log pred − log(target + ε))²`.
pub fn covnet_loss(params: &CovNetParams, batch: &[Sample]) -> Result<f64> {
    check_batch(batch)?;
    let total: f64 = batch
        .iter()
        .map(|s| {
            let out = covnet_log_variance(params, &s.input);
            (0..OUTPUT_DIM)
                .map(|k| (out[k] - log_target(s.target[k])).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Exact gradient of [`covnet_loss`]. The ReLU derivative at 0 is taken as 0.
pub fn covnet_backprop(params: &CovNetParams, batch: &[Sample]) -> Result<CovNetParams> {
    check_batch(batch)?;
    let mut grad = CovNetParams::zeros();
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let x = s.input.features();
        let a = activations(params, &x);
        let mut d_out = [0.0; OUTPUT_DIM];
        for k in 0..OUTPUT_DIM {
            d_out[k] = 2.0 * (a.out[k] - log_target(s.target[k])) * scale;
        }

        let mut d_h2 = [0.0; HIDDEN2];
        for k in 0..OUTPUT_DIM {
            grad.b3[k] += d_out[k];
            for j in 0..HIDDEN2 {
                grad.w3[(k, j)] += d_out[k] * a.h2[j];
                d_h2[j] += params.w3[(k, j)] * d_out[k];
            }
        }

        let mut d_h1 = [0.0; HIDDEN1];
        for j in 0..HIDDEN2 {
            if a.z2[j] <= 0.0 {
                continue;
            }
            let dz = d_h2[j];
            grad.b2[j] += dz;
            let w_row = params.w2.row(j);
            for i in 0..HIDDEN1 {
                grad.w2[(j, i)] += dz * a.h1[i];
                d_h1[i] += w_row[i] * dz;
            }
        }

        for i in 0..HIDDEN1 {
            if a.z1[i] <= 0.0 {
                continue;
            }
            let dz = d_h1[i];
            grad.b1[i] += dz;
            for (c, xc) in x.iter().enumerate() {
                grad.w1[(i, c)] += dz * xc;
            }
        }
    }
    Ok(grad)
}

/// Final parameters and the mean mini-batch loss of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: CovNetParams,
    pub loss_history: Vec<f64>,
}

/// Plain mini-batch gradient descent. Sample order is reshuffled every epoch
/// from the seeded generator, so identical inputs give identical results.
pub fn covnet_train(dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    check_batch(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = CovNetParams::uniform(cfg.init_scale, &mut rng);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i]));
            weighted += covnet_loss(&params, &batch)? * batch.len() as f64;
            if cfg.learning_rate > 0.0 {
                let grad = covnet_backprop(&params, &batch)?;
                params.axpy(-cfg.learning_rate, &grad);
            }
        }
        let epoch_loss = weighted / dataset.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numerical("training loss diverged".into()));
        }
        loss_history.push(epoch_loss);
    }
    Ok(TrainResult {
        params,
        loss_history,
    })
}

/// One layer of a covariance-network rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignnStep {
    pub mean: Vec2,
    /// σ²_x, σ²_y (m²)
    pub variance: [f64; 2],
}

/// Mean trajectory from the HSFM rollout; variances by applying the network
/// recursively, `σ²_{t+1} = net(x_t, σ²_t, x_{t+1})`. Returns `steps + 1` entries.
pub fn signn_rollout(
    sigma0: [f64; 2],
    scene: &SceneSnapshot,
    agent_id: AgentId,
    hsfm: &HsfmParams,
    net: &CovNetParams,
    steps: usize,
) -> Result<Vec<SignnStep>> {
    let index = scene.index_of(agent_id)?;
    let states: Vec<AgentState> = rollout(scene, hsfm, steps)
        .iter()
        .map(|s| s.agents()[index].state)
        .collect();
    let mut out = Vec::with_capacity(steps + 1);
    let mut variance = sigma0;
    out.push(SignnStep {
        mean: states[0].position,
        variance,
    });
    for w in states.windows(2) {
        variance = covnet_forward(net, &CovNetInput::new(&w[0], variance, w[1].position));
        out.push(SignnStep {
            mean: w[1].position,
            variance,
        });
    }
    Ok(out)
}

fn write_block(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    let _ = writeln!(out, "{name} {rows} {cols}");
    for r in 0..rows {
        let line: Vec<String> = data[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

/// Text serialization; floats use the shortest representation that round-trips.
pub fn covnet_to_string(params: &CovNetParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_TAG}");
    let _ = writeln!(s, "dims {INPUT_DIM} {HIDDEN1} {HIDDEN2} {OUTPUT_DIM}");
    write_block(&mut s, "w1", HIDDEN1, INPUT_DIM, params.w1.as_slice());
    write_block(&mut s, "b1", 1, HIDDEN1, &params.b1);
    write_block(&mut s, "w2", HIDDEN2, HIDDEN1, params.w2.as_slice());
    write_block(&mut s, "b2", 1, HIDDEN2, &params.b2);
    write_block(&mut s, "w3", OUTPUT_DIM, HIDDEN2, params.w3.as_slice());
    write_block(&mut s, "b3", 1, OUTPUT_DIM, &params.b3);
    s
}

pub fn covnet_save(params: &CovNetParams, path: &Path) -> Result<()> {
    std::fs::write(path, covnet_to_string(params)).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(Error::parse(
                self.path,
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.last, msg)
    }
}

fn read_block(lines: &mut Lines<'_>, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let header = lines.next(&format!("block header `{name}`"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&name) {
        return Err(lines.err(format!("expected block `{name}`, found `{header}`")));
    }
    let dims: Option<Vec<usize>> = fields[1..].iter().map(|f| f.parse().ok()).collect();
    if dims.as_deref() != Some(&[rows, cols][..]) {
        return Err(lines.err(format!(
            "block {name}: expected {rows}x{cols}, found `{}`",
            fields[1..].join(" ")
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines.next(&format!("row {r} of {name}"))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| lines.err(format!("invalid number `{tok}` in {name}")))?;
            if !v.is_finite() {
                return Err(lines.err(format!("non-finite value in {name}")));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(lines.err(format!(
                "row {r} of {name} has {} values, expected {cols}",
                data.len() - before
            )));
        }
    }
    Ok(data)
}

/// Parses the text weight format; `path` is used for error messages only.
pub fn covnet_from_str(text: &str, path: &Path) -> Result<CovNetParams> {
    let mut lines = Lines {
        path,
        inner: text.lines().enumerate(),
        last: 0,
    };
    let tag = lines.next("format tag")?;
    if tag.trim() != FORMAT_TAG {
        return Err(lines.err(format!("expected `{FORMAT_TAG}`, found `{tag}`")));
    }
    let dims = lines.next("dims line")?;
    let expected = format!("dims {INPUT_DIM} {HIDDEN1} {HIDDEN2} {OUTPUT_DIM}");
    if dims.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
        return Err(lines.err(format!("expected `{expected}`, found `{dims}`")));
    }
    let w1 = read_block(&mut lines, "w1", HIDDEN1, INPUT_DIM)?;
    let b1 = read_block(&mut lines, "b1", 1, HIDDEN1)?;
    let w2 = read_block(&mut lines, "w2", HIDDEN2, HIDDEN1)?;
    let b2 = read_block(&mut lines, "b2", 1, HIDDEN2)?;
    let w3 = read_block(&mut lines, "w3", OUTPUT_DIM, HIDDEN2)?;
    let b3 = read_block(&mut lines, "b3", 1, OUTPUT_DIM)?;
    Ok(CovNetParams {
        w1: Mat::from_row_major(HIDDEN1, INPUT_DIM, w1)?,
        b1,
        w2: Mat::from_row_major(HIDDEN2, HIDDEN1, w2)?,
        b2,
        w3: Mat::from_row_major(OUTPUT_DIM, HIDDEN2, w3)?,
        b3,
    })
}

pub fn covnet_load(path: &Path) -> Result<CovNetParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    covnet_from_str(&text, path)
}
