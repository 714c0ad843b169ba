//! Acceptance suite: one line per criterion, `PASS` or `FAIL`.
//!
//! The trend criteria (7–9) run the full pipeline on the synthetic
//! leave-one-out split: train on four scenes, evaluate on `eth`.

mod common;

use std::time::{Duration, Instant};

use common::*;
use hsfm_signn::covnet::covnet_backprop;
use hsfm_signn::covnet::{covnet_loss, Sample};
use hsfm_signn::eval::{sigma_coverage, CoverageMode, Method, OutcomeStep, PredictionOutcome};
use hsfm_signn::pipeline::{evaluate, train_cov, EvalReport};
use hsfm_signn::uncertainty::{fp_rollout, jacobian_fd, mc_estimate, McConfig, DEFAULT_FD_EPS};
use hsfm_signn::{GaussianBelief, HsfmParams, Mat, SceneSnapshot, Vec2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criteria that are expected to fail on this data; the analysis lives in
/// the project notes. The suite fails if one of these starts passing, so
/// the list cannot go stale.
const KNOWN_FAILURES: &[u32] = &[7, 8];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    println!(
        "criterion {id:>2} {:<4} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    Outcome {
        id,
        name,
        pass,
        detail,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn calibration() -> Outcome {
    let ((p1, p3), took) = timed(|| {
        let mut r = rng(101);
        let outcomes: Vec<PredictionOutcome> = (0..100_000)
            .map(|i| {
                let sx: f64 = r.random_range(0.05..3.0);
                let sy: f64 = r.random_range(0.05..3.0);
                let rho: f64 = r.random_range(-0.9..0.9);
                let cov =
                    Mat::from_rows(&[[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]]).unwrap();
                let z1: f64 = StandardNormal.sample(&mut r);
                let z2: f64 = StandardNormal.sample(&mut r);
                // e = L z with L the Cholesky factor of cov
                let e = Vec2::new(sx * z1, sy * (rho * z1 + (1.0 - rho * rho).sqrt() * z2));
                let truth = Vec2::new(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
                PredictionOutcome {
                    method: Method::Mc,
                    ped_id: i,
                    window: i as usize,
                    steps: vec![OutcomeStep {
                        mean: truth + e,
                        cov2: cov,
                        truth,
                    }],
                }
            })
            .collect();
        (
            sigma_coverage(&outcomes, 1, 1.0, CoverageMode::Mahalanobis).unwrap(),
            sigma_coverage(&outcomes, 1, 3.0, CoverageMode::Mahalanobis).unwrap(),
        )
    });
    let (e1, e3) = (chi2_coverage_pct(1.0), chi2_coverage_pct(3.0));
    let pass = (p1 - e1).abs() <= 0.5 && (p3 - e3).abs() <= 0.2 && took < Duration::from_secs(10);
    report(
        1,
        "coverage calibration",
        pass,
        format!("1σ {p1:.3}% (expect {e1:.3}), 3σ {p3:.3}% (expect {e3:.3}), {took:.2?}"),
    )
}

fn linear_scene() -> SceneSnapshot {
    SceneSnapshot::new(
        vec![
            agent(
                1,
                state(0.0, 0.0, 1.1, 0.4, 0.35, 0.05),
                Vec2::new(40.0, 10.0),
                1.2,
            ),
            agent(
                2,
                state(3.0, 1.0, -0.8, 0.2, 2.9, 0.0),
                Vec2::new(-20.0, 5.0),
                1.0,
            ),
        ],
        0.0,
    )
    .unwrap()
}

fn fp_exactness() -> Outcome {
    let params = HsfmParams::constant_velocity(0.2);
    let scene = linear_scene();
    let mut sigma0 = Mat::zeros(6, 6);
    let mut r = rng(102);
    let mut a = Mat::zeros(6, 6);
    for v in a.as_mut_slice() {
        *v = r.random_range(-0.3..0.3);
    }
    for i in 0..6 {
        for j in 0..6 {
            sigma0[(i, j)] = (0..6).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>()
                + if i == j { 0.01 } else { 0.0 };
        }
    }
    let (res, took) = timed(|| {
        let belief = GaussianBelief::new(scene.agents()[0].state, sigma0.clone()).unwrap();
        fp_rollout(&belief, &scene, 1, &params, 24).unwrap()
    });
    let f = mat_pow(&cv_transition(0.2), 24);
    let expected = naive_mul(&naive_mul(&f, &sigma0), &f.transpose());
    let err = frobenius_diff(&res[24].covariance, &expected);
    report(
        2,
        "FP linear exactness",
        err < 1e-8 && took < Duration::from_secs(1),
        format!("Frobenius error {err:.2e}, {took:.2?}"),
    )
}

fn mc_vs_fp() -> Outcome {
    let params = HsfmParams::constant_velocity(0.2);
    let scene = linear_scene();
    let cfg = McConfig {
        n_samples: 10_000,
        seed: 103,
        ..McConfig::default()
    };
    let (mc, took) = timed(|| mc_estimate(&scene, 1, &params, &cfg, 24).unwrap());
    let fp = fp_rollout(
        &cfg.initial_belief(scene.agents()[0].state),
        &scene,
        1,
        &params,
        24,
    )
    .unwrap();
    let exact = fp[24].position_covariance();
    let rel = frobenius_diff(&mc[24].cov2, &exact) / exact.frobenius();
    report(
        3,
        "MC-FP cross-validation",
        rel < 0.05 && took < Duration::from_secs(30),
        format!("relative Frobenius error {:.2}%, {took:.2?}", 100.0 * rel),
    )
}

fn jacobian_checks() -> Outcome {
    let mut r = rng(104);
    let mut worst_analytic = 0.0f64;
    for _ in 0..100 {
        let (scene, params) = random_isolated(&mut r);
        let jac = jacobian_fd(&scene, 1, &params, &DEFAULT_FD_EPS).unwrap();
        worst_analytic = worst_analytic.max(max_abs_diff(
            &jac.g,
            &analytic_isolated_jacobian(&scene.agents()[0], &params),
        ));
    }
    let mut worst_halving = 0.0f64;
    let params = HsfmParams::default();
    for _ in 0..100 {
        let n = r.random_range(2..7);
        let scene = random_crowd(&mut r, n);
        let full = jacobian_fd(&scene, 1, &params, &[1e-5; 6]).unwrap();
        let half = jacobian_fd(&scene, 1, &params, &[5e-6; 6]).unwrap();
        for (a, b) in full.g.as_slice().iter().zip(half.g.as_slice()) {
            worst_halving = worst_halving.max((a - b).abs());
        }
    }
    report(
        4,
        "Jacobian gradient check",
        worst_analytic < 1e-5 && worst_halving < 1e-4,
        format!("vs analytic {worst_analytic:.2e}, step halving {worst_halving:.2e}"),
    )
}

fn backprop_check() -> Outcome {
    let mut r = rng(105);
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..4 {
        let p = random_params(&mut r, 0.2);
        let batch: Vec<Sample> = (0..5).map(|_| random_sample(&mut r)).collect();
        let grad: Vec<f64> = covnet_backprop(&p, &batch)
            .unwrap()
            .values()
            .copied()
            .collect();
        for _ in 0..8 {
            let idx = r.random_range(0..p.len());
            let h = 1e-6;
            let mut plus = p.clone();
            let mut minus = p.clone();
            *plus.values_mut().nth(idx).unwrap() += h;
            *minus.values_mut().nth(idx).unwrap() -= h;
            let fd = (covnet_loss(&plus, &batch).unwrap() - covnet_loss(&minus, &batch).unwrap())
                / (2.0 * h);
            let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs()).max(1e-4);
            worst = worst.max(rel);
            count += 1;
        }
    }
    report(
        5,
        "backprop gradient check",
        worst <= 1e-5 && count >= 20,
        format!("{count} coordinates, worst relative error {worst:.2e}"),
    )
}

struct Pipeline {
    loss_history: Vec<f64>,
    train_time: Duration,
    eval: EvalReport,
    csv_identical: bool,
}

fn run_pipeline() -> Pipeline {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = synthetic_config(dir.path(), 0, "");
    cfg.data.train_stride = 4;
    cfg.validate().unwrap();
    let (train, train_time) = timed(|| train_cov(&cfg).unwrap());
    let eval = evaluate(&cfg).unwrap();
    let files = ["coverage.csv", "mahalanobis.csv", "errors.csv"];
    let read = |d: &std::path::Path| -> Vec<Vec<u8>> {
        files
            .iter()
            .map(|f| std::fs::read(d.join(f)).unwrap())
            .collect()
    };
    let first = read(&cfg.out);
    let mut again = cfg.clone();
    again.out = dir.path().join("rerun");
    again.set_weights_path(cfg.weights_path());
    evaluate(&again).unwrap();
    Pipeline {
        loss_history: train.result.loss_history,
        train_time,
        eval,
        csv_identical: first == read(&again.out),
    }
}

#[test]
fn acceptance() {
    let mut results = vec![
        calibration(),
        fp_exactness(),
        mc_vs_fp(),
        jacobian_checks(),
        backprop_check(),
    ];

    let p = run_pipeline();
    let first = p.loss_history[0];
    let last = *p.loss_history.last().unwrap();
    results.push(report(
        6,
        "training convergence",
        last <= 0.5 * first
            && p.loss_history.len() <= 200
            && p.train_time < Duration::from_secs(300),
        format!(
            "loss {first:.4} -> {last:.4} over {} epochs, {:.1?}",
            p.loss_history.len(),
            p.train_time
        ),
    ));

    let cov = &p.eval.coverage;
    let agg = |m| cov.aggregate(m).unwrap();
    let (s, mc, fp) = (agg(Method::Signn), agg(Method::Mc), agg(Method::Fp));
    results.push(report(
        7,
        "method ordering SIGNN > MC > FP",
        s.pct_1sigma > mc.pct_1sigma
            && mc.pct_1sigma > fp.pct_1sigma
            && s.pct_3sigma > mc.pct_3sigma
            && mc.pct_3sigma > fp.pct_3sigma,
        format!(
            "1σ {:.2} / {:.2} / {:.2}, 3σ {:.2} / {:.2} / {:.2}",
            s.pct_1sigma, mc.pct_1sigma, fp.pct_1sigma, s.pct_3sigma, mc.pct_3sigma, fp.pct_3sigma
        ),
    ));

    let at = |m, h| cov.at_horizon(m, h).unwrap().pct_1sigma;
    let (fp48, mc48) = (at(Method::Fp, 4.8), at(Method::Mc, 4.8));
    results.push(report(
        8,
        "FP collapse at 4.8 s",
        fp48 < 20.0 && mc48 > 20.0,
        format!("1σ at 4.8 s: FP {fp48:.2}%, MC {mc48:.2}%"),
    ));

    let median = |h: f64| {
        p.eval
            .mahalanobis
            .iter()
            .find(|r| r.method == Method::Mc && (r.horizon_s - h).abs() < 1e-9)
            .unwrap()
            .quartiles
            .median
    };
    let (m10, m48) = (median(1.0), median(4.8));
    results.push(report(
        9,
        "MC degradation with horizon",
        m48 > m10,
        format!("MC median Mahalanobis 1.0 s {m10:.3}, 4.8 s {m48:.3}"),
    ));

    results.push(report(
        10,
        "eval determinism",
        p.csv_identical,
        format!("rerun CSVs byte-identical: {}", p.csv_identical),
    ));

    results.push(gt_suite());

    let passed = results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} criteria passed", results.len());
    for r in &results {
        let expected_fail = KNOWN_FAILURES.contains(&r.id);
        assert!(
            r.pass != expected_fail,
            "criterion {} ({}) {} unexpectedly: {}",
            r.id,
            r.name,
            if r.pass { "passed" } else { "failed" },
            r.detail
        );
    }
}

fn gt_suite() -> Outcome {
    use hsfm_signn::data::gt_covariance;
    let mut r = rng(111);
    let mut ok = true;
    let cases = 500;
    for _ in 0..cases {
        let x1 = Vec2::new(r.random_range(-8.0..8.0), r.random_range(-8.0..8.0));
        let v1 = Vec2::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let n = r.random_range(1..=24);
        let dev: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)))
            .collect();
        let linear = window_with_deviation(x1, v1, &vec![Vec2::ZERO; n]);
        let once = window_with_deviation(x1, v1, &dev);
        let doubled: Vec<Vec2> = dev.iter().map(|d| *d * 2.0).collect();
        let twice = window_with_deviation(x1, v1, &doubled);
        for h in 1..=n {
            let z = gt_covariance(&linear, h).unwrap().sigma_bar;
            let a = gt_covariance(&once, h).unwrap().sigma_bar;
            let b = gt_covariance(&twice, h).unwrap().sigma_bar;
            ok &= z.as_slice().iter().all(|v| *v == 0.0);
            ok &= a[(0, 1)] == 0.0 && a[(1, 0)] == 0.0 && a[(0, 0)] == a[(1, 1)];
            ok &= (b[(0, 0)] - 4.0 * a[(0, 0)]).abs() <= 1e-9 * (1.0 + b[(0, 0)]);
        }
    }
    report(
        11,
        "GT covariance properties",
        ok,
        format!("{cases} random windows: zero on linear, isotropic, quadratic"),
    )
}
