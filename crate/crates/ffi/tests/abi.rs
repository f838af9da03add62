use std::ffi::{c_char, CStr, CString};
use std::ptr;

use driveirl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { di_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0, "no error recorded");
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn weights(theta: &[f64]) -> *mut DiWeights {
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { di_weights_from_array(theta.as_ptr(), theta.len(), &mut w) }, DiStatus::Ok);
    w
}

#[test]
fn feature_names_are_exposed() {
    assert_eq!(di_feature_count(), 12);
    let first = unsafe { CStr::from_ptr(di_feature_name(0)) };
    assert_eq!(first.to_str().unwrap(), "v_target_dev");
    let last = unsafe { CStr::from_ptr(di_feature_name(11)) };
    assert_eq!(last.to_str().unwrap(), "conflict_area");
    assert!(di_feature_name(12).is_null());
}

#[test]
fn weights_round_trip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let theta: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 + 0.05).collect();
    let w = weights(&theta);
    let p = cstr(&dir.path().join("w.json"));
    assert_eq!(unsafe { di_weights_save(w, p.as_ptr()) }, DiStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { di_weights_load(p.as_ptr(), &mut back) }, DiStatus::Ok);
    let mut got = [0.0; 12];
    assert_eq!(unsafe { di_weights_get(back, got.as_mut_ptr(), 12) }, DiStatus::Ok);
    assert_eq!(got.to_vec(), theta);
    unsafe {
        di_weights_free(w);
        di_weights_free(back);
    }
}

#[test]
fn distribution_matches_softmax_of_values() {
    let theta = [1.0, 0.4, 0.1, 0.5, 0.2, 4.0, 2.0, 1.5, 3.0, 1.0, 4.0, 0.3];
    let w = weights(&theta);
    let feats: Vec<f64> = (0..3 * 12).map(|i| ((i * 7) % 5) as f64 * 0.1).collect();
    let mut probs = [0.0; 3];
    let mut logz = 0.0;
    let st = unsafe { di_policy_distribution(feats.as_ptr(), 3, w, probs.as_mut_ptr(), &mut logz) };
    assert_eq!(st, DiStatus::Ok);

    let values: Vec<f64> = feats
        .chunks(12)
        .map(|f| -f.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let z: f64 = values.iter().map(|v| v.exp()).sum();
    for (p, v) in probs.iter().zip(&values) {
        assert!((p - v.exp() / z).abs() < 1e-12);
    }
    assert!((logz - z.ln()).abs() < 1e-12);

    let mut v0 = 0.0;
    assert_eq!(unsafe { di_policy_value(feats.as_ptr(), 12, w, &mut v0) }, DiStatus::Ok);
    assert!((v0 - values[0]).abs() < 1e-12);
    unsafe { di_weights_free(w) };
}

#[test]
fn cycle_gradient_is_expected_minus_demo_mean() {
    let theta = [0.5; 12];
    let w = weights(&theta);
    let feats: Vec<f64> = (0..4 * 12).map(|i| ((i * 3) % 7) as f64 * 0.2).collect();
    let flags = [1u8, 0, 1, 0];
    let mut grad = [0.0; 12];
    let st = unsafe { di_cycle_gradient(feats.as_ptr(), flags.as_ptr(), 4, w, grad.as_mut_ptr()) };
    assert_eq!(st, DiStatus::Ok);

    let mut probs = [0.0; 4];
    unsafe { di_policy_distribution(feats.as_ptr(), 4, w, probs.as_mut_ptr(), ptr::null_mut()) };
    for k in 0..12 {
        let expected: f64 = (0..4).map(|i| probs[i] * feats[i * 12 + k]).sum();
        let demo = (feats[k] + feats[2 * 12 + k]) / 2.0;
        assert!((grad[k] - (expected - demo)).abs() < 1e-12);
    }
    unsafe { di_weights_free(w) };
}

#[test]
fn errors_carry_status_and_message() {
    let mut t = ptr::null_mut();
    let st = unsafe { di_track_generate(DiSegmentKind::Straight, -1.0, 0, ptr::null(), &mut t) };
    assert_eq!(st, DiStatus::InvalidArgument);
    assert!(last_error().contains("length"));
    assert!(t.is_null());

    let st = unsafe { di_weights_from_array([1.0; 3].as_ptr(), 3, &mut ptr::null_mut()) };
    assert_eq!(st, DiStatus::InvalidArgument);

    let st = unsafe { di_track_save(ptr::null(), c"x.json".as_ptr()) };
    assert_eq!(st, DiStatus::NullPointer);
    assert!(last_error().contains("track"));

    let mut o = ptr::null_mut();
    let st = unsafe { di_odometry_load(c"/nonexistent/z.csv".as_ptr(), &mut o) };
    assert_eq!(st, DiStatus::Io);

    let mut w = ptr::null_mut();
    assert_eq!(unsafe { di_weights_expert(&mut w) }, DiStatus::Ok);
    assert_eq!(unsafe { di_last_error(ptr::null_mut(), 0) }, 0);
    unsafe { di_weights_free(w) };
}

#[test]
fn pipeline_runs_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let mut track = ptr::null_mut();
    let st = unsafe { di_track_generate(DiSegmentKind::Straight, 120.0, 3, ptr::null(), &mut track) };
    assert_eq!(st, DiStatus::Ok, "{}", last_error());
    let tp = cstr(&dir.path().join("t.json"));
    assert_eq!(unsafe { di_track_save(track, tp.as_ptr()) }, DiStatus::Ok);
    let mut track2 = ptr::null_mut();
    assert_eq!(unsafe { di_track_load(tp.as_ptr(), ptr::null(), &mut track2) }, DiStatus::Ok);
    assert_eq!(unsafe { di_track_length(track2) }, 120.0);

    let mut expert = ptr::null_mut();
    unsafe { di_weights_expert(&mut expert) };
    let mut zeta = ptr::null_mut();
    let st = unsafe { di_expert_demo(track, expert, 8, ptr::null(), 0, &mut zeta) };
    assert_eq!(st, DiStatus::Ok, "{}", last_error());
    assert!((unsafe { di_odometry_duration(zeta) } - 8.0).abs() < 1e-9);

    let mut init = ptr::null_mut();
    unsafe { di_weights_random(1, &mut init) };
    let mut buffer = ptr::null_mut();
    let st = unsafe { di_buffer_build(track, zeta, init, 0, ptr::null(), &mut buffer) };
    assert_eq!(st, DiStatus::Ok, "{}", last_error());
    assert!(unsafe { di_buffer_len(buffer) } > 0);

    let mut grad = [0.0; 12];
    assert_eq!(unsafe { di_buffer_gradient(buffer, init, grad.as_mut_ptr()) }, DiStatus::Ok);
    assert!(grad.iter().all(|g| g.is_finite()));

    let mut learned = ptr::null_mut();
    let (mut m0, mut m1) = (DiMetrics::default(), DiMetrics::default());
    let st = unsafe { di_train(buffer, init, ptr::null(), &mut learned, &mut m0, &mut m1) };
    assert_eq!(st, DiStatus::Ok, "{}", last_error());
    assert!(m1.loglik >= m0.loglik);

    let mut style = DiStyle::default();
    let st = unsafe { di_evaluate(track, zeta, learned, 0, ptr::null(), &mut style) };
    assert_eq!(st, DiStatus::Ok, "{}", last_error());
    assert!(style.cycles > 0 && style.mean_distance.is_finite());

    unsafe {
        di_track_free(track);
        di_track_free(track2);
        di_weights_free(expert);
        di_weights_free(init);
        di_weights_free(learned);
        di_odometry_free(zeta);
        di_buffer_free(buffer);
    }
}
