//! Run configuration: one TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 7                      # seeds Monte-Carlo sampling and training
//! out = "out"                   # output directory
//! weights = "out/covnet.txt"    # covariance network weights (default <out>/covnet.txt)
//!
//! [data]
//! paths = ["data/eth.txt", "data/hotel.txt"]
//! holdout = "eth"               # file stem of the evaluation scene
//! source_dt = 0.04              # seconds per frame id unit
//! n_obs = 8
//! n_pred = 24
//! train_stride = 1
//! eval_stride = 1
//!
//! [hsfm]    # relaxation_time, desired_speed, repulsion_strength, ...
//! [mc]      # n_samples, init_pos_std, init_vel_std, init_heading_std
//! [train]   # learning_rate, epochs, batch_size, init_scale
//! [eval]    # coverage_mode = "mahalanobis" | "per_axis", sigma0 = [0.0, 0.0]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::covnet::TrainConfig;
use crate::data::GRID_DT;
use crate::error::{Error, Result};
use crate::eval::CoverageMode;
use crate::hsfm::HsfmParams;
use crate::uncertainty::McConfig;

/// Longest prediction horizon accepted (s).
pub const MAX_HORIZON_S: f64 = 4.8;

/// Every recognised key with a short description, for `--help`.
pub const CONFIG_KEYS_HELP: &str = "\
CONFIG FILE (TOML; relative paths resolve against the file's directory):
  seed                     u64   seeds Monte-Carlo sampling and network training [0]
  out                      path  output directory [out]
  weights                  path  covariance network weight file [<out>/covnet.txt]
  [data] paths             list  scene files, one `frame_id ped_id x y` file per scene
  [data] holdout           str   file stem of the held-out evaluation scene
  [data] source_dt         s     seconds per frame id unit [0.04]
  [data] n_obs             int   observed grid steps per window [8]
  [data] n_pred            int   predicted grid steps per window, n_pred*0.2 <= 4.8 [24]
  [data] train_stride      int   window stride on training scenes [1]
  [data] eval_stride       int   window stride on the held-out scene [1]
  [hsfm] relaxation_time   s     goal relaxation time tau [0.5]
  [hsfm] desired_speed     m/s   fallback desired speed [1.3]
  [hsfm] repulsion_strength m/s2 pairwise repulsion A [2.1]
  [hsfm] repulsion_range   m     repulsion decay length B [0.3]
  [hsfm] anisotropy        -     lambda in [0,1] [0.4]
  [hsfm] combined_radius   m     sum of body radii [0.6]
  [hsfm] forward_gain      -     k_f [1.0]
  [hsfm] sideward_gain     -     k_o [1.0]
  [hsfm] angular_damping   1/s   heading-rate damping [0.5]
  [hsfm] heading_inertia   -     heading inertia [1.0]
  [hsfm] dt                s     layer time step [0.2]
  [hsfm] goal_radius       m     desired speed is zero inside this radius [0.3]
  [mc] n_samples           int   Monte-Carlo draws per window, >= 2 [1000]
  [mc] init_pos_std        m     initial position std [0.05]
  [mc] init_vel_std        m/s   initial velocity std [0.1]
  [mc] init_heading_std    rad   initial heading std [0.05]
  [train] learning_rate    -     gradient descent step [0.001]
  [train] epochs           int   [200]
  [train] batch_size       int   [128]
  [train] init_scale       -     uniform weight init half-width [0.1]
  [eval] coverage_mode     str   mahalanobis | per_axis [mahalanobis]
  [eval] sigma0            [m2,m2] initial variances of the network recursion [[0, 0]]
";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub paths: Vec<PathBuf>,
    pub holdout: String,
    pub source_dt: f64,
    pub n_obs: usize,
    pub n_pred: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            paths: Vec::new(),
            holdout: String::new(),
            source_dt: 0.04,
            n_obs: 8,
            n_pred: 24,
            train_stride: 1,
            eval_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub coverage_mode: CoverageMode,
    pub sigma0: [f64; 2],
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            coverage_mode: CoverageMode::Mahalanobis,
            sigma0: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    weights: Option<PathBuf>,
    #[serde(default)]
    data: DataConfig,
    #[serde(default)]
    hsfm: HsfmParams,
    #[serde(default)]
    mc: McSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct McSection {
    n_samples: usize,
    init_pos_std: f64,
    init_vel_std: f64,
    init_heading_std: f64,
}

impl Default for McSection {
    fn default() -> Self {
        let d = McConfig::default();
        McSection {
            n_samples: d.n_samples,
            init_pos_std: d.init_pos_std,
            init_vel_std: d.init_vel_std,
            init_heading_std: d.init_heading_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    init_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            init_scale: d.init_scale,
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    weights: Option<PathBuf>,
    pub data: DataConfig,
    pub hsfm: HsfmParams,
    pub mc: McConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub coverage_mode: Option<CoverageMode>,
    pub holdout: Option<String>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        let mut data = raw.data;
        data.paths = data.paths.into_iter().map(resolve).collect();
        Ok(RunConfig {
            seed: raw.seed,
            out: resolve(raw.out.unwrap_or_else(|| PathBuf::from("out"))),
            weights: raw.weights.map(resolve),
            data,
            hsfm: raw.hsfm,
            mc: McConfig {
                n_samples: raw.mc.n_samples,
                seed: raw.seed,
                init_pos_std: raw.mc.init_pos_std,
                init_vel_std: raw.mc.init_vel_std,
                init_heading_std: raw.mc.init_heading_std,
            },
            train: TrainConfig {
                learning_rate: raw.train.learning_rate,
                epochs: raw.train.epochs,
                batch_size: raw.train.batch_size,
                seed: raw.seed,
                init_scale: raw.train.init_scale,
            },
            eval: raw.eval,
        })
    }

    /// Reads, applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut cfg = RunConfig::from_toml_str(&text, base)?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.mc.seed = seed;
            self.train.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(mode) = o.coverage_mode {
            self.eval.coverage_mode = mode;
        }
        if let Some(h) = &o.holdout {
            self.data.holdout = h.clone();
        }
    }

    pub fn weights_path(&self) -> PathBuf {
        self.weights
            .clone()
            .unwrap_or_else(|| self.out.join("covnet.txt"))
    }

    pub fn set_weights_path(&mut self, path: PathBuf) {
        self.weights = Some(path);
    }

    pub fn validate(&self) -> Result<()> {
        self.hsfm.validate()?;
        self.mc
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        let d = &self.data;
        if d.paths.is_empty() {
            return Err(Error::Config("data.paths is empty".into()));
        }
        for p in &d.paths {
            if !p.is_file() {
                return Err(Error::Config(format!("dataset not found: {}", p.display())));
            }
        }
        if d.n_obs == 0 || d.n_pred == 0 || d.train_stride == 0 || d.eval_stride == 0 {
            return Err(Error::Config("data counts and strides must be >= 1".into()));
        }
        if d.n_pred as f64 * GRID_DT > MAX_HORIZON_S + 1e-9 {
            return Err(Error::Config(format!(
                "n_pred = {} exceeds the {MAX_HORIZON_S} s horizon",
                d.n_pred
            )));
        }
        if (self.hsfm.dt - GRID_DT).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "hsfm.dt must equal the {GRID_DT} s data grid"
            )));
        }
        if !(d.source_dt > 0.0) {
            return Err(Error::Config("data.source_dt must be > 0".into()));
        }
        if self
            .eval
            .sigma0
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(Error::Config("eval.sigma0 entries must be >= 0".into()));
        }
        Ok(())
    }

    /// Scene name of a dataset path (its file stem).
    pub fn scene_name(path: &Path) -> String {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn holdout_path(&self) -> Result<&Path> {
        self.data
            .paths
            .iter()
            .find(|p| RunConfig::scene_name(p) == self.data.holdout)
            .map(PathBuf::as_path)
            .ok_or_else(|| {
                Error::Config(format!(
                    "holdout scene `{}` is not among data.paths",
                    self.data.holdout
                ))
            })
    }

    pub fn training_paths(&self) -> Vec<&Path> {
        self.data
            .paths
            .iter()
            .filter(|p| RunConfig::scene_name(p) != self.data.holdout)
            .map(PathBuf::as_path)
            .collect()
    }
}
