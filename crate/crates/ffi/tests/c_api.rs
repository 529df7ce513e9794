use std::ffi::{CStr, CString};
use std::ptr;

use renewwatch_ffi::*;

fn last_error() -> String {
    let p = rw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config(dir: &std::path::Path) -> *mut RwConfig {
    let toml = CString::new(format!(
        "workers = 1\nstage_dir = {:?}\n[synth]\ntiles_x = 2\ntiles_y = 1\nsolar_count = 4\nwind_count = 6\n",
        dir.display().to_string()
    ))
    .unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rw_config_parse(toml.as_ptr(), &mut cfg) }, RwStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = rw_config_default();
    unsafe {
        assert_eq!(rw_config_set_seed(cfg, 9), RwStatus::Ok);
        assert_eq!(rw_config_validate(cfg), RwStatus::Ok);
        let text = rw_config_to_toml(cfg);
        let mut back = ptr::null_mut();
        assert_eq!(rw_config_parse(text, &mut back), RwStatus::Ok);
        assert!(CStr::from_ptr(text).to_str().unwrap().contains("seed = 9"));
        rw_string_free(text);
        rw_config_free(back);
        rw_config_free(cfg);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(rw_config_parse(ptr::null(), &mut cfg), RwStatus::NullArgument);
        assert!(last_error().contains("null"));

        let bad = CString::new("no_such_key = 1").unwrap();
        assert_eq!(rw_config_parse(bad.as_ptr(), &mut cfg), RwStatus::Config);
        assert!(cfg.is_null());

        let missing = CString::new("/nonexistent/renewwatch.toml").unwrap();
        assert_eq!(rw_config_load(missing.as_ptr(), &mut cfg), RwStatus::Config);

        let cfg = rw_config_default();
        let stage = CString::new("not-a-stage").unwrap();
        assert_eq!(rw_run_stage(cfg, stage.as_ptr(), ptr::null_mut()), RwStatus::Config);
        assert!(last_error().contains("not-a-stage"));

        let invalid = [0xffu8, 0];
        assert_eq!(rw_config_set_stage_dir(cfg, invalid.as_ptr().cast()), RwStatus::InvalidUtf8);
        assert_eq!(rw_config_set_workers(ptr::null_mut(), 2), RwStatus::NullArgument);
        rw_config_free(cfg);
        rw_config_free(ptr::null_mut());
        rw_manifest_free(ptr::null_mut());
        rw_string_free(ptr::null_mut());
    }
}

#[test]
fn runs_a_stage_and_reports_missing_dependencies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    unsafe {
        let infer = CString::new("infer").unwrap();
        assert_eq!(rw_run_stage(cfg, infer.as_ptr(), ptr::null_mut()), RwStatus::Dependency);
        assert!(last_error().contains("train-scorer") || last_error().contains("synth"), "{}", last_error());

        let synth = CString::new("synth").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(rw_run_stage(cfg, synth.as_ptr(), &mut m), RwStatus::Ok, "{}", last_error());
        assert!(rw_manifest_file_count(m) > 0);
        assert!(rw_manifest_quads_per_second(m) < 0.0 || rw_manifest_quads_per_second(m) > 0.0);
        let json = rw_manifest_json(m);
        let doc: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(doc["stage"], "synth");
        assert_eq!(doc["files"].as_array().unwrap().len(), rw_manifest_file_count(m));
        assert!(dir.path().join("synth/manifest.json").exists());
        rw_string_free(json);
        rw_manifest_free(m);
        rw_config_free(cfg);
    }
}

#[test]
fn scalar_helpers() {
    assert!((rw_f2(0.9081, 0.8163) - 0.8331).abs() < 5e-4);
    assert_eq!(rw_f2(0.0, 0.0), 0.0);
    let v = unsafe { CStr::from_ptr(rw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/renewwatch.h")).unwrap();
    for name in [
        "rw_last_error",
        "rw_config_default",
        "rw_config_load",
        "rw_config_parse",
        "rw_config_free",
        "rw_run_stage",
        "rw_manifest_json",
        "rw_manifest_free",
        "rw_string_free",
        "typedef struct RwConfig RwConfig",
        "RW_STATUS_DEPENDENCY = 4",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Builds the C example against the generated header and the shared
/// library, then runs a stage whose dependency is missing.
#[test]
fn c_program_links_and_runs() {
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("librenewwatch_ffi.so").exists() {
        eprintln!("no shared library under {}; skipped", lib_dir.display());
        return;
    }
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("run_stage");
    let status = match std::process::Command::new("cc")
        .arg(root.join("examples/run_stage.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .args(["-lrenewwatch_ffi", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("no C compiler ({e}); skipped");
            return;
        }
    };
    assert!(status.success());
    let out = std::process::Command::new(&exe)
        .args(["vectorize", tmp.path().join("run").to_str().unwrap()])
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(RwStatus::Dependency as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infer"));
}
