use std::ffi::{CStr, CString};
use std::ptr;

use sepred::channel::{generate_channel, save_dataset, ScenarioConfig};
use sepred::features::{assemble, FeatureScheme, FeatureSpec};
use sepred::mimo::{ground_truth, DetectorKind, PrecoderKind};
use sepred::models::{LinearModel, Model};
use sepred_ffi::*;

fn last_error() -> String {
    let p = sepred_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generated(users: usize, index: u64) -> *mut SepredChannel {
    let mut ch = ptr::null_mut();
    let st = unsafe { sepred_channel_generate(SepredScenario::Urban, 7, users, index, &mut ch) };
    assert_eq!(st, SepredStatus::Ok);
    ch
}

#[test]
fn generated_channel_matches_library() {
    let ch = generated(4, 3);
    let expected = generate_channel(&ScenarioConfig::urban(7), 4, 3).unwrap();
    let (mut k, mut r, mut t, mut l) = (0, 0, 0, 0);
    assert_eq!(
        unsafe { sepred_channel_shape(ch, &mut k, &mut r, &mut t, &mut l) },
        SepredStatus::Ok
    );
    assert_eq!(
        (k, r, t, l),
        (
            4,
            expected.rx_antennas(),
            expected.tx_antennas(),
            expected.layers_per_user
        )
    );

    let mut avg = 0.0;
    let mut per_user = [0.0; 4];
    let st = unsafe {
        sepred_spectral_efficiency(
            ch,
            SepredPrecoder::Zf,
            SepredDetector::Mmse,
            &mut avg,
            per_user.as_mut_ptr(),
            4,
        )
    };
    assert_eq!(st, SepredStatus::Ok);
    let gt = ground_truth(&expected, PrecoderKind::Zf, DetectorKind::Mmse).unwrap();
    assert_eq!(avg, gt.se_avg);
    assert_eq!(per_user.to_vec(), gt.se_user);

    let mut s = 0.0;
    assert_eq!(unsafe { sepred_susinr(ch, &mut s) }, SepredStatus::Ok);
    assert!((s - gt.susinr).abs() <= 1e-9 * gt.susinr.abs());
    unsafe { sepred_channel_free(ch) };
}

#[test]
fn features_report_required_length() {
    let ch = generated(2, 0);
    let mut n = 0;
    let st = unsafe { sepred_features(ch, SepredScheme::Sorted, 0, true, true, ptr::null_mut(), 0, &mut n) };
    assert_eq!(st, SepredStatus::InvalidArgument);
    let mut buf = vec![0.0; n];
    let st = unsafe { sepred_features(ch, SepredScheme::Sorted, 0, true, true, buf.as_mut_ptr(), n, &mut n) };
    assert_eq!(st, SepredStatus::Ok);
    let obj = generate_channel(&ScenarioConfig::urban(7), 2, 0).unwrap();
    let spec = FeatureSpec::new(FeatureScheme::Sorted)
        .with_susinr(true)
        .with_sigma2(true);
    assert_eq!(buf, assemble(&obj, &spec).unwrap());
    unsafe { sepred_channel_free(ch) };
}

#[test]
fn channel_from_parts_round_trips_shape() {
    // Two users, one antenna each, orthogonal rows.
    let re = [1.0, 0.0, 0.0, 0.0, 2.0, 0.0];
    let im = [0.0; 6];
    let mut ch = ptr::null_mut();
    let st = unsafe { sepred_channel_from_parts(2, 1, 3, 1, 0.5, re.as_ptr(), im.as_ptr(), &mut ch) };
    assert_eq!(st, SepredStatus::Ok);
    let mut sigma2 = 0.0;
    assert_eq!(unsafe { sepred_channel_sigma2(ch, &mut sigma2) }, SepredStatus::Ok);
    assert_eq!(sigma2, 0.5);
    let mut avg = 0.0;
    let st = unsafe {
        sepred_spectral_efficiency(
            ch,
            SepredPrecoder::Zf,
            SepredDetector::Mmse,
            &mut avg,
            ptr::null_mut(),
            0,
        )
    };
    assert_eq!(st, SepredStatus::Ok);
    assert!(avg.is_finite() && avg > 0.0);
    unsafe { sepred_channel_free(ch) };

    let st = unsafe { sepred_channel_from_parts(0, 1, 3, 1, 0.5, re.as_ptr(), im.as_ptr(), &mut ch) };
    assert_eq!(st, SepredStatus::InvalidArgument);
}

#[test]
fn errors_set_status_and_message() {
    let mut ch = ptr::null_mut();
    let st = unsafe { sepred_channel_generate(SepredScenario::Iid, 1, 0, 0, &mut ch) };
    assert_ne!(st, SepredStatus::Ok);
    assert!(!last_error().is_empty());

    let st = unsafe { sepred_channel_generate(SepredScenario::Iid, 1, 2, 0, ptr::null_mut()) };
    assert_eq!(st, SepredStatus::NullPointer);
    assert!(last_error().contains("out_channel"));

    let mut x = 0.0;
    assert_eq!(unsafe { sepred_susinr(ptr::null(), &mut x) }, SepredStatus::NullPointer);

    let missing = CString::new("/nonexistent/model.seml").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { sepred_model_load(missing.as_ptr(), &mut m) },
        SepredStatus::Data
    );
    assert!(m.is_null());

    let ch = generated(2, 1);
    let mut short = [0.0; 1];
    let st = unsafe {
        sepred_spectral_efficiency(
            ch,
            SepredPrecoder::Mrt,
            SepredDetector::Irc,
            &mut x,
            short.as_mut_ptr(),
            1,
        )
    };
    assert_eq!(st, SepredStatus::InvalidArgument);
    unsafe { sepred_channel_free(ch) };
}

#[test]
fn model_and_dataset_handles() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.seml");
    Model::Linear(LinearModel {
        weights: vec![1.0, -2.0, 0.5],
        bias: 0.25,
        l1_strength: 0.0,
    })
    .save(&model_path)
    .unwrap();
    let c_path = CString::new(model_path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sepred_model_load(c_path.as_ptr(), &mut m) }, SepredStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { sepred_model_n_features(m, &mut n) }, SepredStatus::Ok);
    assert_eq!(n, 3);
    let mut y = 0.0;
    let x = [2.0, 1.0, 4.0];
    assert_eq!(
        unsafe { sepred_model_predict(m, x.as_ptr(), 3, &mut y) },
        SepredStatus::Ok
    );
    assert!((y - 2.25).abs() < 1e-12);
    assert_ne!(
        unsafe { sepred_model_predict(m, x.as_ptr(), 2, &mut y) },
        SepredStatus::Ok
    );
    unsafe { sepred_model_free(m) };

    let cfg = ScenarioConfig::iid(4);
    let objs: Vec<_> = (0..3).map(|i| generate_channel(&cfg, 2, i).unwrap()).collect();
    let ds_path = dir.path().join("d.seds");
    save_dataset(&objs, &ds_path).unwrap();
    let c_path = CString::new(ds_path.to_str().unwrap()).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { sepred_dataset_load(c_path.as_ptr(), &mut ds) },
        SepredStatus::Ok
    );
    let mut len = 0;
    assert_eq!(unsafe { sepred_dataset_len(ds, &mut len) }, SepredStatus::Ok);
    assert_eq!(len, 3);
    let mut ch = ptr::null_mut();
    assert_eq!(unsafe { sepred_dataset_get(ds, 2, &mut ch) }, SepredStatus::Ok);
    let mut sigma2 = 0.0;
    unsafe { sepred_channel_sigma2(ch, &mut sigma2) };
    assert_eq!(sigma2, objs[2].sigma2);
    assert_eq!(
        unsafe { sepred_dataset_get(ds, 3, &mut ch) },
        SepredStatus::InvalidArgument
    );
    unsafe {
        sepred_channel_free(ch);
        sepred_dataset_free(ds);
        sepred_channel_free(ptr::null_mut());
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(sepred_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
