//! Exercise the C surface from Rust: handles, error codes and the
//! closed pipeline featurize -> forward -> controller step.

use std::ffi::{CStr, CString};

use tomonav_ffi::*;

fn cstring(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(tn_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn featurizer_runs_and_validates() {
    let f = tn_featurizer_new(30, 32);
    assert!(!f.is_null());
    unsafe {
        assert_eq!(tn_featurizer_output_len(f), 32 * 32);
        let frame: Vec<f32> = (0..48 * 48).map(|i| (i % 17) as f32 / 16.0).collect();
        let mut out = vec![0.0f32; 32 * 32];
        let status = tn_featurizer_run(f, frame.as_ptr(), 48, 48, out.as_mut_ptr());
        assert_eq!(status, TnStatus::Ok);
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        // Same input twice: identical features through the C surface.
        let mut out2 = vec![0.0f32; 32 * 32];
        tn_featurizer_run(f, frame.as_ptr(), 48, 48, out2.as_mut_ptr());
        assert_eq!(out, out2);
        tn_featurizer_free(f);
    }
    // Invalid construction yields null and a message.
    let bad = tn_featurizer_new(0, 32);
    assert!(bad.is_null());
    let msg = unsafe { CStr::from_ptr(tn_last_error_message()) };
    assert!(!msg.to_bytes().is_empty());
}

#[test]
fn network_forward_through_c_abi() {
    let preset = cstring("tiny");
    let net = unsafe { tn_network_new(preset.as_ptr(), 7) };
    assert!(!net.is_null());
    unsafe {
        assert_eq!(tn_network_input_size(net), 32);
        assert!(tn_network_param_count(net) > 0);
        let feature = vec![0.4f32; 32 * 32];
        let mut actions = [0.0f32; 5];
        let status = tn_network_forward(net, feature.as_ptr(), 32, actions.as_mut_ptr());
        assert_eq!(status, TnStatus::Ok);
        for a in actions {
            assert!((0.0..=1.0).contains(&a));
        }
        // Wrong feature size reports a shape mismatch.
        let small = vec![0.0f32; 16 * 16];
        let status = tn_network_forward(net, small.as_ptr(), 16, actions.as_mut_ptr());
        assert_eq!(status, TnStatus::ShapeMismatch);
        tn_network_free(net);
    }
    let unknown = cstring("galactic");
    assert!(unsafe { tn_network_new(unknown.as_ptr(), 1) }.is_null());
}

#[test]
fn network_load_rejects_missing_and_foreign_files() {
    let preset = cstring("tiny");
    let missing = cstring("/nonexistent/weights.mavw");
    assert!(unsafe { tn_network_load(preset.as_ptr(), missing.as_ptr()) }.is_null());

    // A weights file for one preset must not load into another.
    let dir = std::env::temp_dir().join(format!("tomonav-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tiny.mavw");
    let spec = tomonav::nn::tiny_preset();
    let net = tomonav::nn::build_network(&spec, 3).unwrap();
    tomonav::nn::save_weights(&net, &path).unwrap();

    let full = cstring("full");
    let path_c = cstring(path.to_str().unwrap());
    let handle = unsafe { tn_network_load(full.as_ptr(), path_c.as_ptr()) };
    assert!(handle.is_null());

    let ok = unsafe { tn_network_load(preset.as_ptr(), path_c.as_ptr()) };
    assert!(!ok.is_null());
    unsafe { tn_network_free(ok) };
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn controller_counts_junctions_and_turns() {
    let route = cstring(r#"{"directives":[{"junction":1,"turn":"left"}],"terminal":"halt"}"#);
    let ctl = unsafe { tn_controller_new(route.as_ptr()) };
    assert!(!ctl.is_null());
    let mut cmd = TnVelocityCommand { forward_speed_mps: 0.0, yaw_rate_rps: 0.0, hover: 1 };
    unsafe {
        // Forward frames, then a junction plateau triggering the turn.
        let cruise = [0.9f32, 0.0, 0.0, 0.0, 0.0];
        for _ in 0..5 {
            assert_eq!(tn_controller_step(ctl, cruise.as_ptr(), &mut cmd), TnStatus::Ok);
            assert_eq!(cmd.hover, 0);
            assert_eq!(cmd.yaw_rate_rps, 0.0);
        }
        let junction = [0.9f32, 0.0, 0.0, 0.0, 1.0];
        for _ in 0..4 {
            assert_eq!(tn_controller_step(ctl, junction.as_ptr(), &mut cmd), TnStatus::Ok);
        }
        assert_eq!(tn_controller_junction_count(ctl), 1);
        // The planned left turn is now overriding: positive yaw.
        assert!(cmd.yaw_rate_rps > 0.0);
        tn_controller_free(ctl);
    }
    // Bad plans are rejected.
    let bad = cstring(r#"{"directives":[{"junction":0,"turn":"left"}],"terminal":"halt"}"#);
    assert!(unsafe { tn_controller_new(bad.as_ptr()) }.is_null());
}

/// Compile and run a tiny C program against the generated header and
/// the cdylib; skipped silently when no C compiler is available.
#[test]
fn c_program_links_and_runs() {
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .copied();
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    if !include.join("tomonav.h").is_file() {
        eprintln!("header not generated; skipping");
        return;
    }
    let target = manifest.parent().unwrap().parent().unwrap().join("target").join("debug");
    if !target.join("libtomonav_ffi.so").exists() && !target.join("libtomonav_ffi.dylib").exists()
    {
        eprintln!("cdylib not built; skipping");
        return;
    }
    let dir = std::env::temp_dir().join(format!("tomonav-ffi-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "tomonav.h"

int main(void) {
    if (strlen(tn_version()) == 0) return 1;
    TnFeaturizer *f = tn_featurizer_new(20, 32);
    if (!f) return 2;
    float frame[48 * 48];
    for (int i = 0; i < 48 * 48; i++) frame[i] = (float)(i % 13) / 12.0f;
    float feature[32 * 32];
    if (tn_featurizer_run(f, frame, 48, 48, feature) != TnStatus_Ok) return 3;
    TnNetwork *net = tn_network_new("tiny", 7);
    if (!net) return 4;
    float actions[5];
    if (tn_network_forward(net, feature, 32, actions) != TnStatus_Ok) return 5;
    TnController *ctl =
        tn_controller_new("{\"directives\":[],\"terminal\":\"halt\"}");
    if (!ctl) return 6;
    TnVelocityCommand cmd;
    if (tn_controller_step(ctl, actions, &cmd) != TnStatus_Ok) return 7;
    tn_controller_free(ctl);
    tn_network_free(net);
    tn_featurizer_free(f);
    printf("ok %f %f\n", cmd.forward_speed_mps, cmd.yaw_rate_rps);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let compile = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&target)
        .arg("-ltomonav_ffi")
        .arg("-o")
        .arg(&exe)
        .output()
        .expect("compiler runs");
    assert!(
        compile.status.success(),
        "C compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&exe)
        .env("LD_LIBRARY_PATH", &target)
        .env("DYLD_LIBRARY_PATH", &target)
        .output()
        .expect("smoke binary runs");
    assert!(run.status.success(), "C smoke test exited {:?}", run.status.code());
    std::fs::remove_dir_all(dir).ok();
}
