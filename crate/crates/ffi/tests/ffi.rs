use std::ffi::{c_char, CString};
use std::process::Command;
use std::ptr;

use hsfm_signn::covnet::{covnet_save, CovNetParams};
use hsfm_signn_ffi::*;

fn last_error() -> String {
    unsafe {
        let n = hsfm_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; n + 1];
        hsfm_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
        String::from_utf8(buf[..n].to_vec()).unwrap()
    }
}

fn walker(x: f64) -> HsfmAgentState {
    HsfmAgentState {
        x,
        vx: 1.3,
        ..Default::default()
    }
}

#[test]
fn rollout_of_free_walker() {
    unsafe {
        let params = hsfm_params_new();
        let scene = hsfm_scene_new(0.0);
        assert_eq!(
            hsfm_scene_add_agent(scene, 1, walker(0.0), 100.0, 0.0, 1.3),
            HsfmStatus::Ok
        );
        let mut out = [HsfmAgentState::default(); 5];
        assert_eq!(
            hsfm_rollout(scene, params, 1, 4, out.as_mut_ptr(), out.len()),
            HsfmStatus::Ok
        );
        for (k, s) in out.iter().enumerate() {
            assert!((s.x - 1.3 * 0.2 * k as f64).abs() < 1e-12);
            assert_eq!(s.y, 0.0);
        }
        hsfm_scene_free(scene);
        hsfm_params_free(params);
    }
}

#[test]
fn status_codes_and_messages() {
    unsafe {
        let params = hsfm_params_new();
        let scene = hsfm_scene_new(0.0);
        hsfm_scene_add_agent(scene, 1, walker(0.0), 10.0, 0.0, 1.3);
        assert_eq!(
            hsfm_scene_add_agent(scene, 1, walker(1.0), 10.0, 0.0, 1.3),
            HsfmStatus::InvalidArgument
        );
        assert!(last_error().contains("duplicate"));

        let mut out = [HsfmAgentState::default(); 2];
        assert_eq!(
            hsfm_rollout(scene, params, 1, 4, out.as_mut_ptr(), out.len()),
            HsfmStatus::BufferTooSmall
        );
        assert_eq!(
            hsfm_rollout(ptr::null(), params, 1, 1, out.as_mut_ptr(), out.len()),
            HsfmStatus::NullPointer
        );
        assert_eq!(
            hsfm_rollout(scene, params, 9, 1, out.as_mut_ptr(), out.len()),
            HsfmStatus::InvalidArgument
        );

        let key = CString::new("relaxation_time").unwrap();
        assert_eq!(
            hsfm_params_set(params, key.as_ptr(), -1.0),
            HsfmStatus::Config
        );
        assert_eq!(hsfm_params_set(params, key.as_ptr(), 0.7), HsfmStatus::Ok);
        assert!(last_error().is_empty());
        let bogus = CString::new("bogus").unwrap();
        assert_eq!(
            hsfm_params_set(params, bogus.as_ptr(), 1.0),
            HsfmStatus::InvalidArgument
        );
        assert!(last_error().contains("bogus"));

        hsfm_scene_free(scene);
        hsfm_params_free(params);
    }
}

#[test]
fn fp_and_mc_agree_on_free_walker() {
    unsafe {
        let params = hsfm_params_new();
        let scene = hsfm_scene_new(0.0);
        hsfm_scene_add_agent(scene, 1, walker(0.0), 100.0, 0.0, 1.3);
        let noise = HsfmInitNoise {
            pos_std: 0.05,
            vel_std: 0.1,
            heading_std: 0.05,
        };
        let mut fp = [HsfmPrediction::default(); 6];
        let mut mc = [HsfmPrediction::default(); 6];
        assert_eq!(
            hsfm_fp_rollout(scene, params, 1, noise, 5, fp.as_mut_ptr(), 6),
            HsfmStatus::Ok
        );
        assert_eq!(
            hsfm_mc_estimate(scene, params, 1, noise, 4000, 3, 5, mc.as_mut_ptr(), 6),
            HsfmStatus::Ok
        );
        assert!((fp[0].cov_xx - 0.0025).abs() < 1e-15);
        let (a, b) = (fp[5], mc[5]);
        assert!((a.mean_x - b.mean_x).abs() < 0.01);
        assert!((a.cov_xx - b.cov_xx).abs() / a.cov_xx < 0.1, "{a:?} {b:?}");
        hsfm_scene_free(scene);
        hsfm_params_free(params);
    }
}

#[test]
fn covnet_round_trip_and_forward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    let mut p = CovNetParams::zeros();
    p.b3 = vec![0.5, -0.5];
    covnet_save(&p, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut net: *mut HsfmCovNet = ptr::null_mut();
        assert_eq!(hsfm_covnet_load(cpath.as_ptr(), &mut net), HsfmStatus::Ok);
        let input = [0.0, 0.0, 1.0, 0.0, 0.1, 0.1, 0.2, 0.0];
        let mut out = [0.0; 2];
        assert_eq!(
            hsfm_covnet_forward(net, input.as_ptr(), out.as_mut_ptr()),
            HsfmStatus::Ok
        );
        assert_eq!(out, [0.5f64.exp(), (-0.5f64).exp()]);

        let params = hsfm_params_new();
        let scene = hsfm_scene_new(0.0);
        hsfm_scene_add_agent(scene, 1, walker(0.0), 100.0, 0.0, 1.3);
        let mut pred = [HsfmPrediction::default(); 3];
        assert_eq!(
            hsfm_signn_rollout(scene, params, net, 1, 0.0, 0.0, 2, pred.as_mut_ptr(), 3),
            HsfmStatus::Ok
        );
        assert_eq!(pred[0].cov_xx, 0.0);
        assert_eq!(pred[2].cov_yy, (-0.5f64).exp());
        assert_eq!(pred[2].cov_xy, 0.0);
        hsfm_scene_free(scene);
        hsfm_params_free(params);
        hsfm_covnet_free(net);

        let missing = CString::new("/nonexistent/net.txt").unwrap();
        let mut net2: *mut HsfmCovNet = ptr::null_mut();
        assert_eq!(
            hsfm_covnet_load(missing.as_ptr(), &mut net2),
            HsfmStatus::Io
        );
        assert!(net2.is_null());
    }
}

#[test]
fn mahalanobis_unit_covariance() {
    let mut d = 0.0;
    unsafe {
        assert_eq!(
            hsfm_mahalanobis(3.0, 4.0, 1.0, 0.0, 1.0, &mut d),
            HsfmStatus::Ok
        );
        assert!((d - 5.0).abs() < 1e-6);
        assert_eq!(
            hsfm_mahalanobis(1.0, 0.0, 1.0, 2.0, 1.0, &mut d),
            HsfmStatus::NotPositiveDefinite
        );
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hsfm_signn.h");
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("cc not available; header check skipped");
        return;
    };
    assert!(status.success());
}
