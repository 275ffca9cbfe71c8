use std::path::Path;
use std::process::{Command, Output};

use photostereo::config::RunConfig;
use photostereo::dataset::{load_dataset, NORMAL_GT, NORMAL_GT_PNG};
use photostereo::output::{read_history, read_outputs, Checkpoint, CHECKPOINT, HISTORY, LIGHTS, NORMAL_PFM};
use photostereo::scene::{LightSpec, SceneFile};
use photostereo_core::synthetic::Shape;
use photostereo_core::training::Solver;

const SMALL: &str = r#"
[solve]
samples = 8
bases = 4
octaves = 4
depth_hidden = [16, 16]
material_hidden = [16, 16]

[output]
checkpoint_every = 2
"#;

fn bin(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photostereo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn rendered(root: &Path) -> std::path::PathBuf {
    let mut scene = SceneFile::reference();
    scene.width = 16;
    scene.height = 16;
    scene.shape = Shape::SphereOnPlane { radius: 0.5 };
    scene.lights = LightSpec::Ring {
        count: 6,
        elevation_deg: 45.0,
        azimuth_offset_deg: 10.0,
        intensity: 1.0,
    };
    let scene_path = root.join("scene.toml");
    std::fs::write(&scene_path, scene.to_toml()).unwrap();
    let data = root.join("data");
    ok(bin(&[Path::new("render"), &scene_path, &data]));
    data
}

fn solve(data: &Path, config: &Path, out: &Path, extra: &[&str]) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_photostereo"));
    cmd.arg("solve").arg(data).arg("--config").arg(config).arg("--out").arg(out).args(extra);
    ok(cmd.output().unwrap())
}

#[test]
fn render_solve_eval() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let data = rendered(root);
    assert!(data.join("shadow_gt/006.png").exists());
    assert!(data.join(NORMAL_GT).exists());
    let config = root.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();

    let init = root.join("init");
    solve(&data, &config, &init, &["--epochs", "0"]);
    let est = read_outputs(&init).unwrap();
    let cfg = RunConfig::parse(SMALL).unwrap().solve.with_total_epochs(0);
    let expected = Solver::new(&load_dataset(&data).unwrap(), cfg).unwrap().result().unwrap();
    let lights = est.lights.unwrap();
    for (a, b) in lights.iter().zip(&expected.lights) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-9);
        }
    }
    let obs = load_dataset(&data).unwrap();
    for (n, m) in est.normals.unwrap().iter().zip(obs.mask.data()) {
        if *m {
            assert!((n[2] - 1.0).abs() < 1e-6, "flat start");
        }
    }
    assert!(read_history(&init.join(HISTORY)).unwrap().is_empty());

    let run = root.join("run");
    let printed = solve(&data, &config, &run, &["--epochs", "4"]);
    assert!(printed.starts_with("epoch 3 loss"));
    assert_eq!(read_history(&run.join(HISTORY)).unwrap().len(), 4);
    let report = ok(bin(&[Path::new("eval"), &run, &data]));
    for key in ["normal_mae_deg", "light_mae_deg", "e_int", "shadow_iou_mean"] {
        assert!(report.contains(key), "{report}");
    }
    assert!(run.join("report.txt").exists() && run.join("error_heatmap.png").exists());

    let resumed = root.join("resumed");
    let ck = run.join("checkpoints/epoch_00002.json");
    assert_eq!(Checkpoint::load(&ck).unwrap().state.epoch, 2);
    solve(&data, &config, &resumed, &["--epochs", "4", "--resume", ck.to_str().unwrap()]);
    for f in [LIGHTS, NORMAL_PFM] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(resumed.join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        Checkpoint::load(&run.join(CHECKPOINT)).unwrap(),
        Checkpoint::load(&resumed.join(CHECKPOINT)).unwrap()
    );
}

#[test]
fn eval_without_ground_truth_normals_reports_the_rest() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let data = rendered(root);
    let config = root.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = root.join("out");
    solve(&data, &config, &out, &["--epochs", "0"]);
    std::fs::remove_file(data.join(NORMAL_GT)).unwrap();
    let _ = std::fs::remove_file(data.join(NORMAL_GT_PNG));
    let report = ok(bin(&[Path::new("eval"), &out, &data]));
    assert!(!report.contains("normal_mae_deg"), "{report}");
    assert!(report.contains("light_mae_deg"), "{report}");
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nope");
    let out = Command::new(env!("CARGO_BIN_EXE_photostereo"))
        .arg("solve")
        .arg(&missing)
        .arg("--out")
        .arg(root.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");
    assert!(err.contains("nope"), "{err}");
}
