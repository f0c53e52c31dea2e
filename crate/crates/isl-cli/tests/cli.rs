use std::path::{Path, PathBuf};
use std::process::Command;

use isl_cli::experiments::REGISTRY;
use isl_cli::*;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn zero_xray() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{"experiment": "linear-xray", "grid": {"extent": 12.8, "points": 64},
            "angles": [0.0, 1.0], "offsets": [-0.5, 0.0, 0.5], "v": [16]}"#,
    )
    .unwrap()
}

fn gaussian_xray() -> ExperimentConfig {
    ExperimentConfig::load(&configs().join("linear-xray.json")).unwrap()
}

#[test]
fn example_configs_round_trip() {
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(cfg.hash(), again.hash());
        seen.push(cfg.experiment);
    }
    seen.sort();
    assert_eq!(seen, ExperimentId::ALL.to_vec());
}

#[test]
fn every_experiment_is_registered() {
    for id in ExperimentId::ALL {
        assert_eq!(REGISTRY.iter().filter(|(k, _)| *k == id).count(), 1);
    }
}

#[test]
fn schema_errors_name_the_path() {
    let err =
        ExperimentConfig::from_json(r#"{"experiment": "linear-xray", "grid": {"extent": 12.8}}"#)
            .unwrap_err();
    assert!(
        matches!(&err, CliError::Schema { path, .. } if path == "grid.points"),
        "{err}"
    );
    let err = ExperimentConfig::from_json(
        r#"{"experiment": "nls-recover", "grid": {"extent": 8, "points": 64}, "model": {"coefficients": [{"shapes": [{"kind": "gaussian", "amplitude": 1, "center": [0, 0], "width": "w"}]}]}}"#,
    )
    .unwrap_err();
    assert!(
        matches!(&err, CliError::Schema { path, .. } if path.starts_with("model.coefficients[0].shapes[0]")),
        "{err}"
    );
    let err = ExperimentConfig::from_json(
        r#"{"experiment": "xray", "grid": {"extent": 1, "points": 4}}"#,
    )
    .unwrap_err();
    assert!(
        matches!(&err, CliError::Schema { path, .. } if path == "experiment"),
        "{err}"
    );
    assert!(ExperimentConfig::from_json(
        r#"{"experiment": "linear-xray", "grid": {"extent": 1, "points": 4}, "colour": 1}"#
    )
    .is_err());
    assert!(ExperimentConfig::from_json(
        r#"{"experiment": "linear-xray", "grid": {"extent": 1, "points": 4}, "v": [-1]}"#
    )
    .is_err());
}

#[test]
fn zero_potential_gives_a_zero_sinogram() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&zero_xray(), dir.path(), 1).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert!(r.key_metric().unwrap().value.unwrap() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("sinogram_v16.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("angle,offset,value,mask,err"));
    for line in lines {
        let value: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(value.abs() < 1e-12, "{value}");
    }
    let stored = ExperimentRecord::read(&dir.path().join("record.json")).unwrap();
    assert_eq!(stored, r);
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn records_are_reproducible() {
    let cfg = gaussian_xray();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&cfg, a.path(), 2).unwrap();
    let rb = run(&cfg, b.path(), 2).unwrap();
    assert_eq!(ra.record_hash, rb.record_hash);
    assert_eq!(ra.record_hash, ra.content_hash());
    assert_eq!(
        std::fs::read(a.path().join("sinogram_v8.csv")).unwrap(),
        std::fs::read(b.path().join("sinogram_v8.csv")).unwrap()
    );
    let other = cfg.with_axis("seed", 7.0).unwrap();
    let rc = run(&other, b.path(), 2).unwrap();
    assert_ne!(rc.config_hash, ra.config_hash);
    assert_ne!(rc.record_hash, ra.record_hash);
}

#[test]
fn csv_floats_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    run(&gaussian_xray(), dir.path(), 1).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("target_v8.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let value = row.split(',').nth(2).unwrap();
    let mantissa = value.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(
        mantissa.chars().filter(|c| c.is_ascii_digit()).count(),
        17,
        "{value}"
    );
}

#[test]
fn ab_flux_recovers_alpha_on_a_velocity_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&configs().join("ab-flux.json")).unwrap();
    assert_eq!((cfg.alpha, cfg.v.clone()), (0.3, vec![8.0, 16.0]));
    let r = run(&cfg, dir.path(), 1).unwrap();
    assert_eq!(r.status, Status::Pass, "{r:?}");
    for s in &r.samples {
        assert!((s.values["alpha_mod2"] - 0.3).abs() < 1e-2);
    }
}

#[test]
fn numerical_failures_leave_a_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&configs().join("radon-roundtrip.json")).unwrap();
    // The FBP stage succeeds; a probe this slow is rejected afterwards.
    cfg.v = vec![0.5];
    let r = run(&cfg, dir.path(), 1).unwrap();
    assert_eq!(r.status, Status::Error);
    assert!(r.failure.is_some());
    assert_eq!(r.metrics.len(), 1);
    assert!(r.metrics[0].pass);
    assert!(dir.path().join("reconstruction.csv").exists());
}

#[test]
fn sweep_over_velocity_reports_the_decay_slope() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, records) =
        sweep(&gaussian_xray(), "v", &[8.0, 16.0, 32.0], dir.path(), 2).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(
        summary.items.iter().map(|i| i.value).collect::<Vec<_>>(),
        vec![8.0, 16.0, 32.0]
    );
    let slope = summary.aggregate_slope.unwrap();
    assert!((-1.3..=-0.7).contains(&slope), "{slope}");
    assert_eq!(summary.metric.as_deref(), Some("max_error"));
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, records) = sweep(&zero_xray(), "v", &[], dir.path(), 1).unwrap();
    assert!(summary.items.is_empty() && records.is_empty());
    assert!(matches!(
        sweep(&zero_xray(), "velocity", &[8.0], dir.path(), 1),
        Err(CliError::UnknownAxis(_))
    ));
    assert!(matches!(
        sweep(&zero_xray(), "envelope", &[8.0], dir.path(), 1),
        Err(CliError::UnknownAxis(_))
    ));
    // One bad item does not stop its siblings.
    let (summary, records) = sweep(&zero_xray(), "v", &[16.0, -1.0, 8.0], dir.path(), 2).unwrap();
    let status: Vec<Status> = summary.items.iter().map(|i| i.status).collect();
    assert_eq!(status, vec![Status::Pass, Status::Error, Status::Pass]);
    assert_eq!(records.len(), 2);
}

#[test]
fn nested_axes_substitute_numbers() {
    let cfg = ExperimentConfig::load(&configs().join("nls-linearize.json")).unwrap();
    let c = cfg.with_axis("scattering.dt", 0.02).unwrap();
    assert_eq!(c.scattering.unwrap().dt, 0.02);
    let c = cfg.with_axis("grid.points", 2048.0).unwrap();
    assert_eq!(c.grid.points, 2048);
    assert!(cfg.with_axis("grid.points", 20.5).is_err());
    let c = cfg.with_axis("epsilons", 0.1).unwrap();
    assert_eq!(c.epsilons, vec![0.1]);
}

#[test]
fn report_lists_failures_first() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        report(dir.path(), dir.path()),
        Err(CliError::NoRecords(_))
    ));
    run(&zero_xray(), &dir.path().join("a"), 1).unwrap();
    let single = report(dir.path(), dir.path()).unwrap();
    assert_eq!((single.rows.len(), single.passed, single.failed), (1, 1, 0));

    let mut bad = ExperimentConfig::load(&configs().join("radon-roundtrip.json")).unwrap();
    bad.v = vec![0.5];
    run(&bad, &dir.path().join("b"), 1).unwrap();
    let mixed = report(dir.path(), dir.path()).unwrap();
    assert_eq!(mixed.rows.len(), 2);
    assert_eq!(mixed.rows[0].record, "b");
    assert_eq!(mixed.rows[0].status, Status::Error);
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.lines().nth(2).unwrap().contains("radon-roundtrip"));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn binary_entry_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.json");
    std::fs::write(&cfg, zero_xray().to_json()).unwrap();
    let isl = env!("CARGO_BIN_EXE_isl");
    let out = dir.path().join("run");
    let status = Command::new(isl)
        .args(["--workers", "1", "--out"])
        .arg(&out)
        .arg("run")
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("record.json").exists());
    let typo = Command::new(isl)
        .arg("--out")
        .arg(dir.path().join("s"))
        .args(["sweep"])
        .arg(&cfg)
        .args(["--axis", "vv", "--values", "8"])
        .output()
        .unwrap();
    assert_eq!(typo.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("unknown axis"));
    let rep = Command::new(isl)
        .arg("report")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(rep.success());
    assert!(dir.path().join("report.md").exists());
}
