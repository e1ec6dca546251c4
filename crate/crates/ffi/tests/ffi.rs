use std::ffi::{CStr, CString};
use std::ptr;

use skewlab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(skewlab_last_error()) }.to_string_lossy().into_owned()
}

fn one_stage() -> *mut SkewlabState {
    let cfg = CString::new(r#"{"stages": 1}"#).unwrap();
    let mut st = ptr::null_mut();
    assert_eq!(unsafe { skewlab_construct(cfg.as_ptr(), ptr::null(), &mut st) }, SkewlabStatus::Ok, "{}", last_error());
    assert!(!st.is_null());
    st
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(skewlab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_and_bad_arguments_are_reported() {
    let mut st = ptr::null_mut();
    assert_eq!(unsafe { skewlab_construct(ptr::null(), ptr::null(), ptr::null_mut()) }, SkewlabStatus::NullArgument);
    let bad = CString::new(r#"{"stages": 0}"#).unwrap();
    assert_eq!(unsafe { skewlab_construct(bad.as_ptr(), ptr::null(), &mut st) }, SkewlabStatus::Config);
    assert!(st.is_null());
    assert!(last_error().contains("stages"));
    let junk = CString::new(r#"{"stagez": 1}"#).unwrap();
    assert_eq!(unsafe { skewlab_construct(junk.as_ptr(), ptr::null(), &mut st) }, SkewlabStatus::Config);
    let missing = CString::new("/nonexistent/stage_1.json").unwrap();
    assert_eq!(unsafe { skewlab_state_load(missing.as_ptr(), &mut st) }, SkewlabStatus::Io);
    let mut n = 0u64;
    assert_eq!(unsafe { skewlab_state_completed(ptr::null(), &mut n) }, SkewlabStatus::NullArgument);
    unsafe {
        skewlab_state_free(ptr::null_mut());
        skewlab_map_free(ptr::null_mut());
        skewlab_string_free(ptr::null_mut());
    }
}

#[test]
fn construct_query_and_iterate() {
    let st = one_stage();
    unsafe {
        let mut n = 0u64;
        assert_eq!(skewlab_state_completed(st, &mut n), SkewlabStatus::Ok);
        assert_eq!(n, 1);

        let mut s = ptr::null_mut();
        assert_eq!(skewlab_state_summary_json(st, &mut s), SkewlabStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        assert_eq!(v[0]["stage"], 1);
        assert_eq!(v[0]["hard_pass"], true);
        skewlab_string_free(s);

        assert_eq!(skewlab_state_certificates_json(st, &mut s), SkewlabStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        assert!(v.as_array().unwrap().len() >= 4);
        skewlab_string_free(s);

        let mut map = ptr::null_mut();
        assert_eq!(skewlab_state_map(st, 0, 1, 1, 0, 0, &mut map), SkewlabStatus::Ok);
        let mut alpha = 0.0;
        assert_eq!(skewlab_map_base_rotation(map, &mut alpha), SkewlabStatus::Ok);
        let mut a = 0.0;
        assert_eq!(skewlab_map_amplitude(map, 1, 0, alpha, 0.1, 0.2, 1000, &mut a), SkewlabStatus::Ok);
        assert!((a - 1.0).abs() < 1e-9);
        let mut orbit = vec![0.0; 20];
        assert_eq!(skewlab_map_orbit(map, 0.1, 0.2, 10, orbit.as_mut_ptr()), SkewlabStatus::Ok);
        assert!(orbit.iter().all(|v| (0.0..1.0).contains(v)));
        // base coordinate is a rotation by α
        let dx = (orbit[2] - orbit[0] - alpha).rem_euclid(1.0);
        assert!(dx < 1e-9 || dx > 1.0 - 1e-9);
        let mut z = [0.0; 2];
        assert_eq!(skewlab_map_eval(map, orbit[0], orbit[1], z.as_mut_ptr()), SkewlabStatus::Ok);
        assert!((z[0] - orbit[2]).abs() < 1e-9 && (z[1] - orbit[3]).abs() < 1e-6);
        skewlab_map_free(map);

        assert_eq!(skewlab_state_map(st, 2, 1, 1, 0, 0, &mut map), SkewlabStatus::InvalidParams);
        assert_eq!(skewlab_state_map(st, 1, 1, 2, 0, 2, &mut map), SkewlabStatus::InvalidParams);
        assert_eq!(skewlab_state_map(st, 1, 1, 2, 0, 1, &mut map), SkewlabStatus::Ok);
        let mut a_lift = 0.0;
        assert_eq!(skewlab_map_base_rotation(map, &mut a_lift), SkewlabStatus::Ok);
        assert!((a_lift - alpha).abs() < 1e-12);
        skewlab_map_free(map);
        skewlab_state_free(st);
    }
}

#[test]
fn checkpoints_round_trip() {
    let dir = std::env::temp_dir().join(format!("skewlab_ffi_{}", std::process::id()));
    let st = one_stage();
    let d = CString::new(dir.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(skewlab_state_save(st, d.as_ptr()), SkewlabStatus::Ok);
        let p = CString::new(dir.join("stage_1.json").to_str().unwrap()).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(skewlab_state_load(p.as_ptr(), &mut back), SkewlabStatus::Ok);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        skewlab_state_certificates_json(st, &mut a);
        skewlab_state_certificates_json(back, &mut b);
        assert_eq!(CStr::from_ptr(a), CStr::from_ptr(b));
        skewlab_string_free(a);
        skewlab_string_free(b);
        let mut c = ptr::null_mut();
        assert_eq!(skewlab_state_capt_json(back, 1, 10_000, &mut c), SkewlabStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(c).to_str().unwrap()).unwrap();
        assert_eq!(v["q"], 2);
        skewlab_string_free(c);
        skewlab_state_free(back);
        skewlab_state_free(st);
    }
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/skewlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "skewlab_construct",
        "skewlab_state_load",
        "skewlab_state_free",
        "skewlab_state_map",
        "skewlab_map_orbit",
        "skewlab_string_free",
        "skewlab_last_error",
        "SKEWLAB_STATUS_CERTIFICATE_FAILURE",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let src = std::env::temp_dir().join(format!("skewlab_hdr_{}.c", std::process::id()));
    std::fs::write(&src, format!("#include \"{}\"\nint main(void) {{ return SKEWLAB_STATUS_OK; }}\n", header.display())).unwrap();
    match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).status() {
        Ok(s) => assert!(s.success(), "header does not compile as C99"),
        Err(_) => eprintln!("no C compiler; syntax check skipped"),
    }
    let _ = std::fs::remove_file(src);
}
