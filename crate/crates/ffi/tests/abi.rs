use std::ffi::{CStr, CString};
use std::ptr;

use tgs_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let v = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { tgs_string_free(s) };
    v
}

fn bx(x_left: i64, y_top: i64, x_right: i64, y_bottom: i64) -> TgsBox {
    TgsBox { x_left, y_top, x_right, y_bottom }
}

#[test]
fn metrics_match_hand_values() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(tgs_iou(&bx(0, 0, 10, 10), &bx(5, 5, 15, 15), &mut v), TgsStatus::Ok);
        assert_eq!(v, 25.0 / 175.0);
        assert_eq!(tgs_small_object_ratio(&bx(0, 0, 30, 20), 1000, 2000, &mut v), TgsStatus::Ok);
        assert!((v - 0.03).abs() < 1e-12);
        let (a, b) = (CString::new("green icon").unwrap(), CString::new("icon").unwrap());
        assert_eq!(tgs_token_f1(a.as_ptr(), b.as_ptr(), &mut v), TgsStatus::Ok);
        assert_eq!(v, 2.0 / 3.0);
        let (a, b) = (CString::new("a b c d").unwrap(), CString::new("a c d").unwrap());
        assert_eq!(tgs_rouge_l(a.as_ptr(), b.as_ptr(), &mut v), TgsStatus::Ok);
        assert_eq!(v, 6.0 / 7.0);
        let mut s = TgsBox::default();
        assert_eq!(tgs_scale_box(&bx(0, 0, 500, 1000), 1000, 2000, &mut s), TgsStatus::Ok);
        assert_eq!(s, bx(0, 0, 500, 500));
    }
    assert!(tgs_last_error_message().is_null());
}

#[test]
fn errors_carry_status_and_message() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(tgs_iou(ptr::null(), &bx(0, 0, 1, 1), &mut v), TgsStatus::NullPointer);
        assert!(take(tgs_last_error_message()).contains("null"));
        assert_eq!(tgs_small_object_ratio(&bx(0, 0, 1, 1), 0, 5, &mut v), TgsStatus::Input);
        let bad = [0xffu8, 0];
        let ok = CString::new("x").unwrap();
        assert_eq!(tgs_token_f1(bad.as_ptr().cast(), ok.as_ptr(), &mut v), TgsStatus::InvalidUtf8);
        let missing = CString::new("/nonexistent/model.tgs").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(tgs_model_load(missing.as_ptr(), &mut m), TgsStatus::Io);
        assert!(m.is_null());
        assert!(!take(tgs_last_error_message()).is_empty());
    }
}

#[test]
fn scene_and_model_handles_round_trip() {
    unsafe {
        let mut scene = ptr::null_mut();
        assert_eq!(tgs_scene_generate(42, &mut scene), TgsStatus::Ok);
        let (mut w, mut h, mut n) = (0u32, 0u32, 0usize);
        assert_eq!(tgs_scene_size(scene, &mut w, &mut h), TgsStatus::Ok);
        assert!(w > 0 && h > 0);
        assert_eq!(tgs_scene_node_count(scene, &mut n), TgsStatus::Ok);
        assert!(n > 1);
        let mut js = ptr::null_mut();
        assert_eq!(tgs_scene_to_json(scene, &mut js), TgsStatus::Ok);
        let js: serde_json::Value = serde_json::from_str(&take(js)).unwrap();
        assert_eq!(js["width"], w);

        let mut model = ptr::null_mut();
        assert_eq!(tgs_model_new(1, &mut model), TgsStatus::Ok);
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.tgs").to_str().unwrap()).unwrap();
        assert_eq!(tgs_model_save(model, path.as_ptr()), TgsStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(tgs_model_load(path.as_ptr(), &mut loaded), TgsStatus::Ok);

        let prompt = CString::new("<image>\nWhere on the screen is the icon named <ref>bell</ref>?").unwrap();
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(tgs_model_answer(model, scene, 6, prompt.as_ptr(), &mut a), TgsStatus::Ok);
        assert_eq!(tgs_model_answer(loaded, scene, 6, prompt.as_ptr(), &mut b), TgsStatus::Ok);
        assert_eq!(take(a), take(b));

        let mut c = ptr::null_mut();
        assert_eq!(tgs_model_answer(model, scene, 99, prompt.as_ptr(), &mut c), TgsStatus::Config);
        assert!(c.is_null());

        tgs_model_free(loaded);
        tgs_model_free(model);
        tgs_scene_free(scene);
        tgs_scene_free(ptr::null_mut());
    }
}
