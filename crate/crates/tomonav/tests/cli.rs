//! End-to-end checks of the command-line interface: subcommand
//! behavior, exit codes and artifact layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tomonav"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tomonav-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "tomo": { "num_angles": 30, "output_size": 32 },
  "preset": "tiny",
  "train": { "epochs": 2, "batch_size": 32, "learning_rate": 0.2, "momentum": 0.9, "seed": 5 },
  "world": { "target_junctions": 8 },
  "camera": { "resolution": 40 },
  "split": { "train": 0.4, "val": 0.3, "test": 0.3, "seed": 1 },
  "episodes": 3,
  "frames_per_episode": 1000,
  "route_min_junctions": 2,
  "route_min_length_m": 100.0,
  "route_max_length_m": 500.0
}"#,
    )
    .unwrap();
    path
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed ({:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage") || err.contains("usage"), "stderr should carry usage text");
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn gen_world_is_deterministic() {
    let dir = workdir("genworld");
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    ok(&bin().args(["gen-world", "--seed", "9"]).arg("--out").arg(&a).output().unwrap());
    ok(&bin().args(["gen-world", "--seed", "9"]).arg("--out").arg(&b).output().unwrap());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    // The resolved config lands next to the output.
    assert!(dir.join("a.config.json").is_file());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn radon_of_zero_image_is_all_zero_csv() {
    let dir = workdir("radon");
    let pgm = dir.join("zero.pgm");
    tomonav::image::Image::zeros(32, 32).save_pgm(&pgm).unwrap();
    let csv = dir.join("zero.csv");
    ok(&bin()
        .args(["radon", "--angles", "45"])
        .arg("--in")
        .arg(&pgm)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap());
    let text = std::fs::read_to_string(&csv).unwrap();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            assert_eq!(line, "angle_rad,offset_px,value");
            continue;
        }
        let value = line.rsplit(',').next().unwrap();
        assert_eq!(value.parse::<f64>().unwrap(), 0.0, "line {i}: {line}");
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn radon_reconstruct_round_trip_runs() {
    let dir = workdir("recon");
    let pgm = dir.join("disc.pgm");
    tomonav::tomography::phantom::disc(64, 16.0, 1.0).save_pgm(&pgm).unwrap();
    let sino = dir.join("disc.sino");
    ok(&bin().args(["radon"]).arg("--in").arg(&pgm).arg("--out").arg(&sino).output().unwrap());
    let back = dir.join("recon.pgm");
    ok(&bin()
        .args(["reconstruct", "--size", "64"])
        .arg("--in")
        .arg(&sino)
        .arg("--out")
        .arg(&back)
        .output()
        .unwrap());
    let img = tomonav::image::Image::load_pgm(&back).unwrap();
    // The disc interior must come back brighter than the exterior.
    let c = 31.5;
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for y in 0..64 {
        for x in 0..64 {
            let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            if d2 < 14.0 * 14.0 {
                inside.0 += img.get(x, y);
                inside.1 += 1;
            } else if d2 > 18.0 * 18.0 {
                outside.0 += img.get(x, y);
                outside.1 += 1;
            }
        }
    }
    assert!(inside.0 / inside.1 as f64 > outside.0 / outside.1 as f64 + 0.3);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn train_on_missing_data_is_a_data_error() {
    let dir = workdir("nodata");
    let cfg = small_config(&dir);
    let out = bin()
        .args(["train"])
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(dir.join("empty"))
        .arg("--out")
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(dir).ok();
}

/// The full pipeline, including the `eval --assert` exit-code contract
/// and checkpoint-resume equivalence.
#[test]
fn pipeline_resume_and_assert_contracts() {
    let dir = workdir("pipeline");
    let cfg = small_config(&dir);
    let world = dir.join("w.json");
    ok(&bin()
        .args(["gen-world", "--seed", "5"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&world)
        .output()
        .unwrap());
    let data = dir.join("data");
    ok(&bin()
        .args(["demo"])
        .arg("--config")
        .arg(&cfg)
        .arg("--world")
        .arg(&world)
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap());

    // Featurize one episode explicitly; a second run is all cache hits.
    let ep0 = data.join("ep_000");
    ok(&bin().args(["featurize"]).arg("--config").arg(&cfg).arg("--episode").arg(&ep0).output().unwrap());
    let out = bin()
        .args(["featurize"])
        .arg("--config")
        .arg(&cfg)
        .arg("--episode")
        .arg(&ep0)
        .output()
        .unwrap();
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 computed"), "second featurize pass should be pure hits: {text}");

    // Straight 2-epoch run.
    let run_a = dir.join("run_a");
    ok(&bin()
        .args(["train"])
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_a)
        .output()
        .unwrap());

    // Interrupted run: 1 epoch, then resume to 2. Weights must match
    // the straight run bit for bit.
    let cfg1 = dir.join("config1.json");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("\"epochs\": 2", "\"epochs\": 1");
    std::fs::write(&cfg1, text).unwrap();
    let run_b1 = dir.join("run_b1");
    ok(&bin()
        .args(["train"])
        .arg("--config")
        .arg(&cfg1)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_b1)
        .output()
        .unwrap());
    let run_b2 = dir.join("run_b2");
    ok(&bin()
        .args(["train"])
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_b2)
        .arg("--resume")
        .arg(run_b1.join("checkpoint.mavc"))
        .output()
        .unwrap());
    let wa = std::fs::read(run_a.join("weights.mavw")).unwrap();
    let wb = std::fs::read(run_b2.join("weights.mavw")).unwrap();
    assert_eq!(wa, wb, "resumed training must reproduce the uninterrupted run exactly");

    // Different seed must change the weights.
    let run_c = dir.join("run_c");
    ok(&bin()
        .args(["train", "--seed", "99"])
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_c)
        .output()
        .unwrap());
    let wc = std::fs::read(run_c.join("weights.mavw")).unwrap();
    assert_ne!(wa, wc, "the training seed must actually be used");

    // Eval passes with trivial thresholds and fails with absurd ones.
    ok(&bin().args(["eval"]).arg("--run").arg(&run_a).arg("--data").arg(&data).output().unwrap());
    let out = bin()
        .args(["eval", "--assert", "--min-junction-f", "0.999", "--min-accuracy", "0.999"])
        .arg("--run")
        .arg(&run_a)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "threshold misses must exit 3");
    std::fs::remove_dir_all(dir).ok();
}
