//! The three end-to-end commands: predict, train-cov and eval.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::covnet::{
    covnet_load, covnet_save, covnet_train, signn_rollout, CovNetParams, TrainResult,
};
use crate::data::{
    build_covnet_dataset, build_windows, parse_trajectories, resample, PredictionWindow, GRID_DT,
};
use crate::error::{Error, Result};
use crate::eval::{
    coverage_table, errors_csv, fmt_sig6, mahalanobis_csv, mahalanobis_table, CoverageTable,
    MahalanobisRow, Method, OutcomeStep, PredictionOutcome,
};
use crate::linalg::Mat;
use crate::uncertainty::{fp_rollout, mc_estimate, McConfig};

/// Prediction windows of one scene file plus the resampling skip report.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub name: String,
    pub windows: Vec<PredictionWindow>,
    pub skipped: Vec<String>,
}

pub fn load_scene(path: &Path, cfg: &RunConfig, stride: usize) -> Result<LoadedScene> {
    let records = parse_trajectories(path)?;
    let resampled = resample(&records, cfg.data.source_dt, GRID_DT)?;
    let windows = build_windows(
        &resampled.series,
        cfg.data.n_obs,
        cfg.data.n_pred,
        stride,
        GRID_DT,
    )?;
    Ok(LoadedScene {
        name: RunConfig::scene_name(path),
        windows,
        skipped: resampled.skip_report(),
    })
}

fn report_skips(scene: &LoadedScene) {
    for line in &scene.skipped {
        eprintln!("{}: {line}", scene.name);
    }
}

/// Monte-Carlo seed of window `index`; windows draw from unrelated streams.
pub fn window_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(
        (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    )
}

/// FP, MC and (when `net` is given) SIGNN predictions for one window.
pub fn window_outcomes(
    window: &PredictionWindow,
    index: usize,
    cfg: &RunConfig,
    net: Option<&CovNetParams>,
) -> Result<Vec<PredictionOutcome>> {
    let scene = window.scene()?;
    let id = window.agent_id();
    let n = window.n_pred();
    let truth = |h: usize| window.future[h - 1].position;
    let outcome = |method, steps| PredictionOutcome {
        method,
        ped_id: window.ped_id,
        window: index,
        steps,
    };
    let mut out = Vec::with_capacity(3);

    let ego = scene.agent(id)?.state;
    let fp = fp_rollout(&cfg.mc.initial_belief(ego), &scene, id, &cfg.hsfm, n)?;
    out.push(outcome(
        Method::Fp,
        (1..=n)
            .map(|h| OutcomeStep {
                mean: fp[h].mean.position,
                cov2: fp[h].position_covariance(),
                truth: truth(h),
            })
            .collect(),
    ));

    let mc_cfg = McConfig {
        seed: window_seed(cfg.mc.seed, index),
        ..cfg.mc
    };
    let mc = mc_estimate(&scene, id, &cfg.hsfm, &mc_cfg, n)?;
    out.push(outcome(
        Method::Mc,
        (1..=n)
            .map(|h| OutcomeStep {
                mean: mc[h].mean,
                cov2: mc[h].cov2.clone(),
                truth: truth(h),
            })
            .collect(),
    ));

    if let Some(net) = net {
        let sg = signn_rollout(cfg.eval.sigma0, &scene, id, &cfg.hsfm, net, n)?;
        out.push(outcome(
            Method::Signn,
            (1..=n)
                .map(|h| OutcomeStep {
                    mean: sg[h].mean,
                    cov2: Mat::diag(&sg[h].variance),
                    truth: truth(h),
                })
                .collect(),
        ));
    }
    Ok(out)
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_weights(cfg: &RunConfig) -> Result<CovNetParams> {
    let path = cfg.weights_path();
    if !path.is_file() {
        return Err(Error::Config(format!(
            "covariance network weights not found at {}; run train-cov first",
            path.display()
        )));
    }
    covnet_load(&path)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub result: TrainResult,
    pub n_windows: usize,
    pub n_samples: usize,
    pub weights_path: PathBuf,
    pub loss_path: PathBuf,
}

pub fn train_loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, fmt_sig6(*l));
    }
    s
}

/// Trains the covariance network on every scene except the holdout and
/// writes the weights and `train_loss.csv`.
pub fn train_cov(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.holdout_path()?;
    let paths = cfg.training_paths();
    if paths.is_empty() {
        return Err(Error::Config(
            "no training scenes besides the holdout".into(),
        ));
    }
    let mut windows = Vec::new();
    for p in paths {
        let scene = load_scene(p, cfg, cfg.data.train_stride)?;
        report_skips(&scene);
        windows.extend(scene.windows);
    }
    let dataset = build_covnet_dataset(&windows, &cfg.hsfm, cfg.eval.sigma0)?;
    if dataset.is_empty() {
        return Err(Error::Data(
            "training scenes yield no prediction windows".into(),
        ));
    }
    let result = covnet_train(&dataset, &cfg.train)?;
    create_out_dir(&cfg.out)?;
    let weights_path = cfg.weights_path();
    if let Some(parent) = weights_path.parent() {
        create_out_dir(parent)?;
    }
    covnet_save(&result.params, &weights_path)?;
    let loss_path = cfg.out.join("train_loss.csv");
    write_file(&loss_path, &train_loss_csv(&result.loss_history))?;
    Ok(TrainReport {
        n_windows: windows.len(),
        n_samples: dataset.len(),
        result,
        weights_path,
        loss_path,
    })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub outcomes: Vec<PredictionOutcome>,
    pub coverage: CoverageTable,
    pub mahalanobis: Vec<MahalanobisRow>,
    pub n_windows: usize,
}

/// Evaluates FP, MC and SIGNN on the held-out scene and writes
/// `coverage.csv`, `mahalanobis.csv` and `errors.csv`.
pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let net = load_weights(cfg)?;
    let scene = load_scene(cfg.holdout_path()?, cfg, cfg.data.eval_stride)?;
    report_skips(&scene);
    if scene.windows.is_empty() {
        return Err(Error::Data(format!(
            "holdout scene `{}` has no prediction windows",
            scene.name
        )));
    }
    let per_window: Vec<Vec<PredictionOutcome>> = scene
        .windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| window_outcomes(w, i, cfg, Some(&net)))
        .collect::<Result<_>>()?;
    let outcomes: Vec<PredictionOutcome> = per_window.into_iter().flatten().collect();
    let coverage = coverage_table(&outcomes, GRID_DT, cfg.eval.coverage_mode)?;
    let mahalanobis = mahalanobis_table(&outcomes, GRID_DT)?;
    create_out_dir(&cfg.out)?;
    write_file(&cfg.out.join("coverage.csv"), &coverage.to_csv())?;
    write_file(
        &cfg.out.join("mahalanobis.csv"),
        &mahalanobis_csv(&mahalanobis),
    )?;
    write_file(&cfg.out.join("errors.csv"), &errors_csv(&outcomes)?)?;
    Ok(EvalReport {
        outcomes,
        coverage,
        mahalanobis,
        n_windows: scene.windows.len(),
    })
}

#[derive(Debug, Clone)]
pub struct PredictReport {
    pub scene: String,
    pub window: usize,
    pub ped_id: i64,
    pub outcomes: Vec<PredictionOutcome>,
    pub csv: String,
    /// Set when SIGNN was left out for lack of weights.
    pub warning: Option<String>,
}

pub const PREDICT_HEADER: &str = "method,step,t_s,mean_x,mean_y,cov_xx,cov_xy,cov_yy,true_x,true_y";

pub fn predict_csv(outcomes: &[PredictionOutcome], dt: f64) -> String {
    let mut s = format!("{PREDICT_HEADER}\n");
    for o in outcomes {
        for (i, st) in o.steps.iter().enumerate() {
            let h = i + 1;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                o.method,
                h,
                fmt_sig6(h as f64 * dt),
                fmt_sig6(st.mean.x),
                fmt_sig6(st.mean.y),
                fmt_sig6(st.cov2[(0, 0)]),
                fmt_sig6(st.cov2[(0, 1)]),
                fmt_sig6(st.cov2[(1, 1)]),
                fmt_sig6(st.truth.x),
                fmt_sig6(st.truth.y),
            );
        }
    }
    s
}

/// Predicts one window of `scene_path` (windows enumerated with stride 1)
/// and writes `predict.csv`. SIGNN is omitted with a warning when no
/// weights exist.
pub fn predict(cfg: &RunConfig, scene_path: &Path, window: usize) -> Result<PredictReport> {
    let scene = load_scene(scene_path, cfg, 1)?;
    report_skips(&scene);
    let w = scene.windows.get(window).ok_or_else(|| {
        if scene.windows.is_empty() {
            Error::InvalidArgument(format!("scene `{}` has no prediction windows", scene.name))
        } else {
            Error::InvalidArgument(format!(
                "window {window} out of range; scene `{}` has windows 0..={}",
                scene.name,
                scene.windows.len() - 1
            ))
        }
    })?;
    let (net, warning) = if cfg.weights_path().is_file() {
        (Some(covnet_load(&cfg.weights_path())?), None)
    } else {
        (
            None,
            Some(format!(
                "no covariance network weights at {}; SIGNN omitted",
                cfg.weights_path().display()
            )),
        )
    };
    let outcomes = window_outcomes(w, window, cfg, net.as_ref())?;
    let csv = predict_csv(&outcomes, GRID_DT);
    create_out_dir(&cfg.out)?;
    write_file(&cfg.out.join("predict.csv"), &csv)?;
    Ok(PredictReport {
        scene: scene.name,
        window,
        ped_id: w.ped_id,
        outcomes,
        csv,
        warning,
    })
}
