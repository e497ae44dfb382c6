//! End-to-end checks of the command-line surface: exit codes, artifact
//! layout, and report idempotency.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bae() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bae"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn solve_reference_instance_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("instance.json");
    write(
        &inst,
        r#"{
            "W": {"kind": "quadratic", "h": [[1.0]]},
            "sample": [[-1.0], [0.0], [1.0]],
            "K": 2,
            "options": {"restarts": 20}
        }"#,
    );
    let out = bae()
        .args(["solve", "--config"])
        .arg(&inst)
        .arg("--oracle")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("objective 0.5"), "{stdout}");
}

#[test]
fn solve_k1_prints_global_mean() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("instance.json");
    write(
        &inst,
        r#"{
            "W": {"kind": "quadratic", "h": [[1.0]]},
            "sample": [[1.0], [2.0], [6.0]],
            "K": 1
        }"#,
    );
    let out = bae().args(["solve", "--config"]).arg(&inst).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("action 0: [3.0]"), "{stdout}");
}

#[test]
fn solve_rejects_malformed_instance_with_validation_exit() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("broken.json");
    write(&inst, r#"{"W": {"kind": "quadratic"}}"#);
    let out = bae().args(["solve", "--config"]).arg(&inst).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes_identity_and_fails_convex_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("identity.json");
    write(
        &good,
        r#"{
            "w": {"kind": "quadratic", "h": [[1.0, 0.0], [0.0, 1.0]]},
            "policy": {"kind": "identity"},
            "sample": {"n": 200, "dim": 2, "seed": 3}
        }"#,
    );
    let out = bae().args(["verify", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let bad = dir.path().join("convex_sphere.json");
    write(
        &bad,
        r#"{
            "w": {"kind": "radial", "phi": "identity", "h": [[1.0, 0.0], [0.0, 1.0]]},
            "policy": {"kind": "sphere"},
            "sample": {"n": 300, "dim": 2, "seed": 5}
        }"#,
    );
    let out = bae().args(["verify", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL sphere_condition"), "{stdout}");
}

#[test]
fn simulate_then_report_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    write(
        &cfg,
        r#"{
            "version": 1,
            "dataset": {"kind": "simulated", "d": [6], "nu_star": [1], "n": [200], "sigma": [0.0]},
            "bottleneck": [2],
            "algorithms": ["plain_nn", "uae_then_nn", "bae_type2"],
            "seeds": [0, 1],
            "epochs": 3
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bae()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--jobs", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for artifact in ["summary.csv", "summary.json", "tables.md"] {
        assert!(out_dir.join(artifact).is_file(), "missing {artifact}");
    }
    assert!(out_dir
        .join("runs/d6_nu1_n200_sig0.00/bae_type2_b2/1.csv")
        .is_file());

    let before = fs::read(out_dir.join("summary.csv")).unwrap();
    let report = bae()
        .args(["report", "--run-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let after = fs::read(out_dir.join("summary.csv")).unwrap();
    assert_eq!(before, after, "report must reproduce the summary exactly");
}

#[test]
fn seeds_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    write(
        &cfg,
        r#"{
            "version": 1,
            "dataset": {"kind": "simulated", "d": [4], "nu_star": [1], "n": [100], "sigma": [0.0]},
            "bottleneck": [1],
            "algorithms": ["plain_nn"],
            "seeds": [0, 1, 2],
            "epochs": 2
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bae()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seeds", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let alg_dir = out_dir.join("runs/d4_nu1_n100_sig0.00/plain_nn");
    let count = fs::read_dir(&alg_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().and_then(|x| x.to_str()) == Some("csv")
        })
        .count();
    assert_eq!(count, 1, "only the overridden seed should have run");
    assert!(alg_dir.join("7.csv").is_file());
}

#[test]
fn images_subcommand_validates_dataset_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    write(
        &cfg,
        r#"{
            "version": 1,
            "dataset": {"kind": "simulated", "d": [4], "nu_star": [1], "n": [100], "sigma": [0.0]},
            "bottleneck": [1],
            "algorithms": ["plain_nn"],
            "seeds": [0],
            "epochs": 1
        }"#,
    );
    let out = bae()
        .args(["images", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn write_idx_pair(dir: &Path, prefix: &str, rows: usize) {
    // 2x2 grayscale images, labels cycling through the 10 classes.
    let mut img: Vec<u8> = Vec::new();
    img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&2u32.to_be_bytes());
    img.extend_from_slice(&2u32.to_be_bytes());
    let mut lab: Vec<u8> = Vec::new();
    lab.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lab.extend_from_slice(&(rows as u32).to_be_bytes());
    for i in 0..rows {
        let class = (i % 10) as u8;
        // Make the pixels weakly class-dependent so accuracy can move.
        img.extend_from_slice(&[
            class * 20,
            255 - class * 20,
            (i % 7) as u8 * 30,
            (i % 3) as u8 * 50,
        ]);
        lab.push(class);
    }
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), img).unwrap();
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), lab).unwrap();
}

#[test]
fn images_grid_runs_on_synthetic_idx_files() {
    let dir = tempfile::tempdir().unwrap();
    write_idx_pair(dir.path(), "train", 120);
    write_idx_pair(dir.path(), "t10k", 60);
    let cfg = dir.path().join("grid.json");
    write(
        &cfg,
        r#"{
            "version": 1,
            "dataset": {
                "kind": "idx",
                "train_images": "train-images-idx3-ubyte",
                "train_labels": "train-labels-idx1-ubyte",
                "test_images": "t10k-images-idx3-ubyte",
                "test_labels": "t10k-labels-idx1-ubyte",
                "train_subset": 60,
                "test_subset": 30,
                "noise": [0.0, 0.5],
                "clip_to_unit": true
            },
            "bottleneck": [2],
            "algorithms": ["plain_nn", "bae_type2"],
            "seeds": [0],
            "epochs": 2
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bae()
        .args(["images", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("BAE_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Accuracies are valid probabilities for every noise level.
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut rows = 0;
    for line in summary.lines().skip(1) {
        let mean: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&mean), "accuracy out of range: {line}");
        rows += 1;
    }
    assert_eq!(rows, 4, "two noise levels x two algorithms");
    assert!(out_dir.join("runs/noise0.50/bae_type2_b2/0.csv").is_file());
}

#[test]
fn report_on_missing_directory_is_a_runtime_error() {
    let out = bae()
        .args(["report", "--run-dir", "/nonexistent/run/dir"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
