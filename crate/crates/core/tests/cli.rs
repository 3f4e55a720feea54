use std::path::Path;
use std::process::{Command, Output};

use voxgan::cli::{CHECKPOINT_FILE, EXIT_CONFIG, EXIT_DATA, EXIT_OK, RESOLVED_CONFIG_FILE, TELEMETRY_FILE};
use voxgan::trainer::Trainer;
use voxgan::voxel::{read_binvox, write_binvox, VoxelGrid};

const TINY: &str = "res = 8\nlatent_dim = 4\nbatch = 4\ntoy_count = 2\ntoy_orientations = 2\n\
                    gen_channels = 4,2,1\ndisc_channels = 2,2\nenc_channels = 2,2\n";

fn voxgan(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxgan"))
        .current_dir(cwd)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn train(cwd: &Path, mode: &str, epochs: &str) {
    std::fs::write(cwd.join("tiny.cfg"), format!("mode = {mode}\n{TINY}")).unwrap();
    ok(&voxgan(cwd, &["train", "--config", "tiny.cfg", "--epochs", epochs, "--out", "run"]));
}

#[test]
fn smoke_train_then_generate_and_interpolate() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    train(cwd, "iwgan", "5");
    let run = cwd.join("run");
    for f in [CHECKPOINT_FILE, TELEMETRY_FILE, RESOLVED_CONFIG_FILE] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let t = Trainer::load(&run.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(t.state.epoch, 5);
    // 4 grids at batch 4: one batch per epoch, one header line.
    let telemetry = std::fs::read_to_string(run.join(TELEMETRY_FILE)).unwrap();
    assert_eq!(telemetry.lines().count(), 1 + 5);

    ok(&voxgan(
        cwd,
        &["generate", "--checkpoint", "run/checkpoint.vxgn", "--count", "3", "--binvox", "--out", "gen"],
    ));
    let binvox: Vec<_> = std::fs::read_dir(cwd.join("gen"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "binvox"))
        .collect();
    assert_eq!(binvox.len(), 3);
    assert_eq!(read_binvox(&binvox[0]).unwrap().extent(), 8);

    ok(&voxgan(
        cwd,
        &["interpolate", "--checkpoint", "run/checkpoint.vxgn", "--seed-a", "1", "--seed-b", "2", "--out", "interp"],
    ));
    assert_eq!(std::fs::read_dir(cwd.join("interp")).unwrap().count(), 5);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    train(cwd, "iwgan", "2");
    ok(&voxgan(cwd, &["train", "--config", "run/config.resolved", "--out", "again"]));
    let a = std::fs::read(cwd.join("run").join(CHECKPOINT_FILE)).unwrap();
    let b = std::fs::read(cwd.join("again").join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scan_complete_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    train(cwd, "vae-iwgan", "2");
    let cube = VoxelGrid::from_fn(8, |x, y, z| (2..6).contains(&x) && (2..6).contains(&y) && (2..6).contains(&z)).unwrap();
    write_binvox(&cube, &cwd.join("cube.binvox")).unwrap();

    ok(&voxgan(cwd, &["scan", "--grid", "cube.binvox", "--view", "-x", "--out", "scan"]));
    let pgm = std::fs::read(cwd.join("scan/depth.pgm")).unwrap();
    assert!(pgm.starts_with(b"P"));
    let shell = VoxelGrid::read_vxg(&cwd.join("scan/shell.vxg")).unwrap();
    assert!(shell.is_subset_of(&cube));
    assert_eq!(shell.count(), 16);

    ok(&voxgan(
        cwd,
        &["complete", "--checkpoint", "run/checkpoint.vxgn", "--grid", "scan/shell.vxg", "--out", "done.binvox"],
    ));
    assert_eq!(read_binvox(&cwd.join("done.binvox")).unwrap().extent(), 8);

    ok(&voxgan(
        cwd,
        &["evaluate", "--checkpoint", "run/checkpoint.vxgn", "--config", "tiny.cfg", "--out", "eval"],
    ));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cwd.join("eval/report.json")).unwrap()).unwrap();
    let mean_iou = report["mean_iou"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean_iou));
    let csv = std::fs::read_to_string(cwd.join("eval/iou.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + report["sample_count"].as_u64().unwrap() as usize);
}

#[test]
fn unknown_config_key_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("bad.cfg"), "res = 8\n# comment\nlearning_rate = 3\n").unwrap();
    let o = voxgan(cwd, &["train", "--config", "bad.cfg", "--out", "run"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.cfg") && err.contains(":3") && err.contains("learning_rate"), "{err}");
    assert!(!cwd.join("run").join(CHECKPOINT_FILE).exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    assert_eq!(voxgan(cwd, &["--help"]).status.code(), Some(EXIT_OK));
    assert_eq!(voxgan(cwd, &["train", "--no-such-flag"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(voxgan(cwd, &["train", "--res", "7", "--out", "r"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(
        voxgan(cwd, &["train", "--data", "missing-dir", "--out", "r"]).status.code(),
        Some(EXIT_DATA)
    );
    std::fs::write(cwd.join("junk.vxgn"), b"not a checkpoint").unwrap();
    assert_eq!(
        voxgan(cwd, &["generate", "--checkpoint", "junk.vxgn", "--out", "g"]).status.code(),
        Some(EXIT_DATA)
    );
    assert_eq!(
        voxgan(cwd, &["scan", "--grid", "nothing.binvox", "--out", "s"]).status.code(),
        Some(EXIT_DATA)
    );
}

#[test]
fn zero_epochs_exits_cleanly_with_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    train(cwd, "iwgan", "0");
    let resolved = std::fs::read_to_string(cwd.join("run").join(RESOLVED_CONFIG_FILE)).unwrap();
    assert!(resolved.contains("epochs = 0"));
}

#[test]
fn interpolation_endpoints_match_generated_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    train(cwd, "iwgan", "2");
    ok(&voxgan(
        cwd,
        &["interpolate", "--checkpoint", "run/checkpoint.vxgn", "--seed-a", "3", "--seed-b", "4", "--steps", "2", "--out", "lerp"],
    ));
    let mut steps: Vec<_> = std::fs::read_dir(cwd.join("lerp")).unwrap().map(|e| e.unwrap().path()).collect();
    steps.sort();
    assert_eq!(steps.len(), 2);
    for (seed, path) in ["3", "4"].iter().zip(&steps) {
        let out = format!("gen{seed}");
        ok(&voxgan(cwd, &["generate", "--checkpoint", "run/checkpoint.vxgn", "--seed", seed, "--out", &out]));
        let sample = std::fs::read_dir(cwd.join(&out)).unwrap().next().unwrap().unwrap().path();
        assert_eq!(
            VoxelGrid::read_vxg(&sample).unwrap(),
            VoxelGrid::read_vxg(path).unwrap(),
            "seed {seed}"
        );
    }
    let o = voxgan(
        cwd,
        &["interpolate", "--checkpoint", "run/checkpoint.vxgn", "--seed-a", "3", "--seed-b", "4", "--steps", "1", "--out", "bad"],
    );
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn scan_of_a_solid_cube_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let solid = VoxelGrid::from_fn(6, |_, _, _| true).unwrap();
    solid.write_vxg(&cwd.join("solid.vxg")).unwrap();
    ok(&voxgan(cwd, &["scan", "--grid", "solid.vxg", "--out", "scan"]));
    let pgm = std::fs::read(cwd.join("scan/depth.pgm")).unwrap();
    let pixels = &pgm[pgm.len() - 36..];
    assert!(pixels.iter().all(|&p| p == pixels[0]));
    let shell = VoxelGrid::read_vxg(&cwd.join("scan/shell.vxg")).unwrap();
    assert_eq!(shell.count(), 36);
}
