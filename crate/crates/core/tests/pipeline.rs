use std::fs;

use attrakt::config::ExperimentConfig;
use attrakt::geometry::{self, io, PointCloud};
use attrakt::pipeline::{run_stages, Stage};
use attrakt::systems::SystemKind;

fn sink_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(SystemKind::PointSink);
    cfg.output.dir = dir.to_path_buf();
    cfg
}

#[test]
fn point_sink_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let arts = run_stages(&sink_config(dir.path()), dir.path(), Stage::Sample, Stage::Verify).unwrap();
    assert!(arts.failure.is_none(), "{:?}", arts.failure);
    assert_eq!(arts.completed, Stage::ALL.to_vec());

    let s = &arts.summary;
    assert_eq!(s["status"], "ok");
    assert!(s["results"]["hausdorff_X_LA"].as_f64().unwrap() <= 1e-3);
    assert!(s["results"]["reproduction_error"].as_f64().unwrap() <= 1e-6);
    assert_eq!(s["results"]["all_captured"], true);
    assert_eq!(s["results"]["invariance_violations"], 0);
    assert_eq!(s["constants"]["K"], 1);
    assert_eq!(s["constants"]["s_est"], 0.0);

    let x = io::load(&dir.path().join("x_est.csv")).unwrap();
    assert!(x.points().all(|p| geometry::norm(p) <= 1e-6));
    for name in ["sample.bin", "embedded.csv", "embedding.json", "traj_capture_0.csv", "plot.gp", "config.resolved.toml"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn resume_reproduces_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sink_config(dir.path());
    run_stages(&cfg, dir.path(), Stage::Sample, Stage::Verify).unwrap();
    let full = fs::read(dir.path().join("summary.json")).unwrap();
    let arts = run_stages(&cfg, dir.path(), Stage::Lyapunov, Stage::Verify).unwrap();
    assert_eq!(arts.completed, vec![Stage::Lyapunov, Stage::Verify]);
    assert_eq!(fs::read(dir.path().join("summary.json")).unwrap(), full);
}

#[test]
fn gate_failure_stops_before_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(SystemKind::PlanarCycle);
    cfg.embedding.m = 6;
    let arts = run_stages(&cfg, dir.path(), Stage::Sample, Stage::Verify).unwrap();
    let f = arts.failure.unwrap();
    assert_eq!((f.stage, f.exit_code, f.cause.as_str()), (Stage::Dimension, 10, "gate"));
    assert!(f.message.contains("any m > max{d+1,6}"), "{}", f.message);
    assert_eq!(arts.completed, vec![Stage::Sample]);
    assert_eq!(arts.summary["status"], "failed");
    assert_eq!(arts.summary["failure"]["exit_code"], 10);
    assert!(!dir.path().join("embedding.json").exists());
    assert!(dir.path().join("failure.json").exists());
}

#[test]
fn later_stage_without_artifacts_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let arts = run_stages(&sink_config(dir.path()), dir.path(), Stage::Extend, Stage::Verify).unwrap();
    let f = arts.failure.unwrap();
    assert_eq!(f.stage, Stage::Extend);
    assert_eq!(arts.summary["status"], "failed");
}

#[test]
fn truncated_sample_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sink_config(dir.path());
    run_stages(&cfg, dir.path(), Stage::Sample, Stage::Sample).unwrap();
    let path = dir.path().join("sample.bin");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(io::load(&path).is_err());
    let arts = run_stages(&cfg, dir.path(), Stage::Dimension, Stage::Dimension).unwrap();
    assert_eq!(arts.failure.unwrap().stage, Stage::Dimension);
}

#[test]
fn cloud_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud::from_rows(&[[0.1, -2.5, 1e-300], [f64::MAX, 0.0, -0.0]]).unwrap();
    io::save_bin(&dir.path().join("c.bin"), &cloud).unwrap();
    io::save_csv(&dir.path().join("c.csv"), &cloud).unwrap();
    assert_eq!(io::load(&dir.path().join("c.bin")).unwrap(), cloud);
    assert_eq!(io::load(&dir.path().join("c.csv")).unwrap(), cloud);
}
