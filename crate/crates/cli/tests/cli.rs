use std::path::Path;
use std::process::Command;

use seqvo::data::write_poses;
use seqvo::eval::{accumulate_trajectory, save_depth_png};
use seqvo::geometry::{DepthMap, Pose6};

fn seqvo(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_seqvo")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.success(), text)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_odometry_reports_zero_for_scaled_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let rel: Vec<Pose6> = (0..9).map(|i| Pose6::new(0.1, 0.0, 1.0, 0.0, 0.02 * i as f64, 0.0)).collect();
    let gt = accumulate_trajectory(&rel).unwrap();
    let scaled: Vec<Pose6> = rel.iter().map(|p| Pose6::new(3.0 * p.tx, 0.0, 3.0 * p.tz, 0.0, p.ry, 0.0)).collect();
    let pred = accumulate_trajectory(&scaled).unwrap();
    let (gp, pp) = (dir.path().join("gt.txt"), dir.path().join("pred.txt"));
    write_poses(&gp, gt.poses()).unwrap();
    write_poses(&pp, pred.poses()).unwrap();
    let out = dir.path().join("out");
    let (ok, text) = seqvo(&["eval-odometry", "--pred", s(&pp), "--gt", s(&gp), "--out", s(&out)]);
    assert!(ok, "{text}");
    assert!(text.contains("ate 0.000000"), "{text}");
    assert!(out.join("pred.png").exists() && out.join("pred.txt").exists());
}

#[test]
fn eval_depth_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (pd, gd) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pd).unwrap();
    std::fs::create_dir_all(&gd).unwrap();
    let gt = DepthMap::new(4, 2, vec![0.0, 2.0, 4.0, 8.0, 16.0, 32.0, 0.0, 64.0]).unwrap();
    let pred = DepthMap::new(4, 2, gt.data().iter().map(|v| v * 2.0 + 1.0).collect()).unwrap();
    save_depth_png(&gd.join("000000.png"), &gt).unwrap();
    save_depth_png(&pd.join("000000.png"), &pred).unwrap();
    let out = dir.path().join("out");
    let (ok, text) = seqvo(&["eval-depth", "--pred", s(&pd), "--gt", s(&gd), "--no-median-scale", "--out", s(&out)]);
    assert!(ok, "{text}");
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("name,abs_diff,abs_rel,sq_rel,a1,a2,a3\n000000,"), "{csv}");
    assert!(csv.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn train_rejects_unknown_gan_and_missing_config() {
    let (ok, text) = seqvo(&["train", "--config", "/nonexistent.cfg"]);
    assert!(!ok && text.contains("nonexistent"), "{text}");
    let (ok, _) = seqvo(&["train", "--config", "x.cfg", "--gan", "lsgan"]);
    assert!(!ok);
}

#[test]
fn train_runs_a_few_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(
        &cfg,
        "dataset = synthetic\nsynth.width = 32\nsynth.height = 16\nsynth.fx = 16\nsynth.fy = 16\nsynth.cx = 15.5\nsynth.cy = 7.5\nsynth.frames = 6\nwindow = 4\nmax_steps = 2\ncheckpoint_dir = ck\n",
    )
    .unwrap();
    let (ok, text) = seqvo(&["train", "--config", s(&cfg), "--no-tc", "--gan", "wgan", "--seed", "3"]);
    assert!(ok, "{text}");
    assert!(dir.path().join("ck/step_00000002.vock").exists(), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("ck/losses.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
