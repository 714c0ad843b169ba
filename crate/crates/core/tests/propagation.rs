mod common;

use common::*;
use hsfm_signn::linalg::{is_psd, Mat};
use hsfm_signn::uncertainty::*;
use hsfm_signn::{GaussianBelief, HsfmParams, SceneSnapshot, Vec2};
use rand::Rng;

fn cv_scene() -> SceneSnapshot {
    SceneSnapshot::new(
        vec![agent(
            1,
            state(0.0, 0.0, 1.0, 0.5, 0.4, 0.1),
            Vec2::new(50.0, 20.0),
            1.2,
        )],
        0.0,
    )
    .unwrap()
}

fn random_spd(r: &mut rand_chacha::ChaCha8Rng) -> Mat {
    let mut a = Mat::zeros(6, 6);
    for v in a.as_mut_slice() {
        *v = r.random_range(-0.2..0.2);
    }
    let mut s = naive_mul(&a, &a.transpose());
    for i in 0..6 {
        s[(i, i)] += 0.01;
    }
    s
}

#[test]
fn fp_matches_closed_form_on_linear_layers() {
    let params = HsfmParams::constant_velocity(0.2);
    let scene = cv_scene();
    let mut r = rng(31);
    let sigma0 = random_spd(&mut r);
    let belief = GaussianBelief::new(scene.agents()[0].state, sigma0.clone()).unwrap();
    let beliefs = fp_rollout(&belief, &scene, 1, &params, 24).unwrap();
    let f = mat_pow(&cv_transition(0.2), 24);
    let expected = naive_mul(&naive_mul(&f, &sigma0), &f.transpose());
    let err = frobenius_diff(&beliefs[24].covariance, &expected);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn mc_error_shrinks_with_sample_count() {
    let params = HsfmParams::constant_velocity(0.2);
    let scene = cv_scene();
    let cfg = McConfig::default();
    let fp = fp_rollout(
        &cfg.initial_belief(scene.agents()[0].state),
        &scene,
        1,
        &params,
        24,
    )
    .unwrap();
    let exact = fp[24].position_covariance();
    let mean_err = |n: usize| -> f64 {
        (0..6)
            .map(|seed| {
                let mc = mc_estimate(
                    &scene,
                    1,
                    &params,
                    &McConfig {
                        n_samples: n,
                        seed,
                        ..cfg
                    },
                    24,
                )
                .unwrap();
                frobenius_diff(&mc[24].cov2, &exact) / exact.frobenius()
            })
            .sum::<f64>()
            / 6.0
    };
    let errs: Vec<f64> = [100, 1000, 10_000].into_iter().map(mean_err).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 0.05, "{errs:?}");
}

#[test]
fn fp_step_stays_psd_on_random_inputs() {
    let mut r = rng(32);
    let params = HsfmParams::default();
    for _ in 0..1000 {
        let n = r.random_range(1..5);
        let scene = random_crowd(&mut r, n);
        let sigma = random_spd(&mut r);
        let belief = GaussianBelief::new(scene.agents()[0].state, sigma).unwrap();
        let next = fp_step(&belief, &scene, 1, &params).unwrap();
        assert!(next.covariance.is_symmetric(1e-12));
        assert!(is_psd(&next.covariance, 1e-9));
    }
}

#[test]
fn mc_results_do_not_depend_on_thread_count() {
    let mut r = rng(33);
    let scene = random_crowd(&mut r, 4);
    let cfg = McConfig {
        n_samples: 300,
        seed: 5,
        ..McConfig::default()
    };
    let params = HsfmParams::default();
    let many = mc_estimate(&scene, 2, &params, &cfg, 12).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let one = pool.install(|| mc_estimate(&scene, 2, &params, &cfg, 12).unwrap());
    assert_eq!(many, one);
}
