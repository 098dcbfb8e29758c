use std::ffi::{CStr, CString};
use std::ptr;

use mpec::data::{encode_archive, synth_dataset, SynthConfig};
use mpec_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mpec_last_error()) }.to_string_lossy().into_owned()
}

fn archive_bytes(seed: u64) -> Vec<u8> {
    let trials = synth_dataset(&SynthConfig {
        classes: 2,
        trials_per_class: 12,
        channels: 3,
        samples: 100,
        separation: 2.0,
        noise: 0.2,
        seed,
    })
    .unwrap()
    .trials;
    encode_archive(&trials).unwrap()
}

const FAST: &str = r#"{"learners": {"forest": {"trees": 10}, "mlp": {"epochs": 20}}, "cluster": {"k": 2}}"#;

#[test]
fn fit_predict_save_load_round_trip() {
    let bytes = archive_bytes(1);
    let dir = tempfile::tempdir().unwrap();
    let model_path = CString::new(dir.path().join("m.mpec").to_str().unwrap()).unwrap();
    let config = CString::new(FAST).unwrap();
    unsafe {
        let mut trials = ptr::null_mut();
        assert_eq!(mpec_trials_from_buffer(bytes.as_ptr(), bytes.len(), &mut trials), MpecStatus::Ok);
        assert_eq!(mpec_trials_len(trials), 24);

        let mut model = ptr::null_mut();
        assert_eq!(mpec_model_fit(trials, config.as_ptr(), 5, &mut model), MpecStatus::Ok);
        assert_eq!(mpec_model_class_count(model), 2);

        let mut first = vec![0u32; 24];
        assert_eq!(mpec_model_predict(model, trials, first.as_mut_ptr(), 24), MpecStatus::Ok);
        let correct = first.iter().enumerate().filter(|(i, &c)| c as usize == i / 12).count();
        assert!(correct >= 22, "{correct}/24");

        assert_eq!(mpec_model_save(model, model_path.as_ptr()), MpecStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(mpec_model_load(model_path.as_ptr(), &mut loaded), MpecStatus::Ok);
        let mut second = vec![0u32; 24];
        assert_eq!(mpec_model_predict(loaded, trials, second.as_mut_ptr(), 24), MpecStatus::Ok);
        assert_eq!(first, second);

        mpec_model_free(loaded);
        mpec_model_free(model);
        mpec_trials_free(trials);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut trials = ptr::null_mut();
        assert_eq!(mpec_trials_from_buffer(b"nope".as_ptr(), 4, &mut trials), MpecStatus::Data);
        assert!(trials.is_null());
        assert!(last_error().contains("magic"), "{}", last_error());

        assert_eq!(mpec_trials_from_buffer(ptr::null(), 3, &mut trials), MpecStatus::NullPointer);
        assert_eq!(mpec_trials_read(ptr::null(), &mut trials), MpecStatus::NullPointer);

        let bytes = archive_bytes(2);
        assert_eq!(mpec_trials_from_buffer(bytes.as_ptr(), bytes.len(), &mut trials), MpecStatus::Ok);
        let bad_config = CString::new(r#"{"cluster": {"w1": 0.9, "w2": 0.9}}"#).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(mpec_model_fit(trials, bad_config.as_ptr(), 0, &mut model), MpecStatus::Config);
        assert!(model.is_null());
        let unknown = CString::new(r#"{"colour": 1}"#).unwrap();
        assert_eq!(mpec_model_fit(trials, unknown.as_ptr(), 0, &mut model), MpecStatus::Config);
        assert!(last_error().contains("colour"));

        let missing = CString::new("/nonexistent/model.mpec").unwrap();
        assert_eq!(mpec_model_load(missing.as_ptr(), &mut model), MpecStatus::Data);

        let mut out = [0u32; 3];
        assert_eq!(mpec_model_predict(ptr::null(), trials, out.as_mut_ptr(), 3), MpecStatus::NullPointer);
        mpec_trials_free(trials);
        mpec_trials_free(ptr::null_mut());
        mpec_model_free(ptr::null_mut());
    }
}

#[test]
fn predict_checks_the_output_length() {
    let bytes = archive_bytes(3);
    let config = CString::new(FAST).unwrap();
    unsafe {
        let mut trials = ptr::null_mut();
        assert_eq!(mpec_trials_from_buffer(bytes.as_ptr(), bytes.len(), &mut trials), MpecStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(mpec_model_fit(trials, config.as_ptr(), 0, &mut model), MpecStatus::Ok);
        let mut out = vec![0u32; 5];
        assert_eq!(mpec_model_predict(model, trials, out.as_mut_ptr(), 5), MpecStatus::InvalidArgument);
        mpec_model_free(model);
        mpec_trials_free(trials);
    }
}

#[test]
fn arrays_build_trials_in_channel_major_order() {
    let data: Vec<f64> = (0..2 * 2 * 3).map(f64::from).collect();
    let labels = [0u32, 1];
    unsafe {
        let mut trials = ptr::null_mut();
        assert_eq!(mpec_trials_from_arrays(data.as_ptr(), labels.as_ptr(), 2, 2, 3, &mut trials), MpecStatus::Ok);
        assert_eq!(mpec_trials_len(trials), 2);
        mpec_trials_free(trials);
        assert_eq!(mpec_trials_from_arrays(data.as_ptr(), labels.as_ptr(), 2, 2, 1, &mut trials), MpecStatus::Data);
    }
}

#[test]
fn distance_matches_the_diagonal_closed_form() {
    let a = [1.0, 0.0, 0.0, 4.0];
    let b = [4.0, 0.0, 0.0, 1.0];
    let mut d = 0.0;
    unsafe {
        assert_eq!(mpec_airm_distance(a.as_ptr(), b.as_ptr(), 2, &mut d), MpecStatus::Ok);
    }
    assert!((d - 2f64.sqrt() * 4f64.ln()).abs() < 1e-12);
    let indefinite = [1.0, 2.0, 2.0, 1.0];
    unsafe {
        assert_eq!(mpec_airm_distance(a.as_ptr(), indefinite.as_ptr(), 2, &mut d), MpecStatus::Numerical);
        assert_eq!(mpec_airm_distance(a.as_ptr(), b.as_ptr(), 2, ptr::null_mut()), MpecStatus::NullPointer);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(mpec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
