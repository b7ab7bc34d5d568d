//! End-to-end tests of the config, report and command-line layers.

use std::process::Command;

use spinglass::config::{AdviceConfig, Experiment, ExperimentConfig, MixtureConfig, TapConfig};
use spinglass::disorder::read_raw;
use spinglass::experiments::run;
use spinglass::report::{Report, SCHEMA_VERSION};
use spinglass_core::hamiltonian::raw_disorder;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinglass"))
}

#[test]
fn toml_round_trip_is_bit_exact() {
    let mut cfg = ExperimentConfig::new(Experiment::Tap, 12345);
    cfg.mixture = Some(MixtureConfig { terms: vec![(2, 0.1), (3, 0.05 + 1e-17), (4, 1.0 / 3.0)], tilt: 0.0 });
    cfg.tap = Some(TapConfig { t: 0.1 + 0.2, iota: Some(std::f64::consts::PI / 7.0), ..Default::default() });
    let cfg = cfg.resolve().unwrap();
    let text = cfg.to_toml_string().unwrap();
    let back = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    let t = back.tap.as_ref().unwrap();
    assert_eq!(t.t.to_bits(), (0.1f64 + 0.2).to_bits());
    assert_eq!(back.to_toml_string().unwrap(), text);
}

#[test]
fn identical_configs_give_identical_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::FunctionalSuite, 7);
    cfg.workers = 2;
    let a = run(cfg.clone(), &dir.path().join("a")).unwrap();
    let b = run(cfg.clone(), &dir.path().join("b")).unwrap();
    assert_eq!(a.report.content_hash, b.report.content_hash);
    assert_eq!(a.report.content_hash, a.report.compute_hash().unwrap());
    cfg.workers = 1;
    let c = run(cfg, &dir.path().join("c")).unwrap();
    assert_eq!(a.report.results, c.report.results, "results must not depend on the worker count");
}

#[test]
fn thresholds_for_pure_three_spin() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Thresholds, 0);
    cfg.mixture = Some(MixtureConfig::parse("3:1").unwrap());
    let art = run(cfg, dir.path()).unwrap();
    let r = &art.report.results;
    // 1/sqrt(8/9) and 1/sqrt(3/4): maximizers q = 1/3 and q = 1/2 of the two threshold functionals
    assert!((r["beta_sl"].as_f64().unwrap() - (9.0f64 / 8.0).sqrt()).abs() < 1e-6);
    assert!((r["beta_shatter"].as_f64().unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-6);
    assert!(art.report.passed);
}

#[test]
fn report_layout_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Tap, 3);
    cfg.mixture = Some(MixtureConfig::parse("2:0.2,3:0.1").unwrap());
    cfg.tap = Some(TapConfig { n: 12, starts: 3, ..Default::default() });
    let art = run(cfg, dir.path()).unwrap();
    assert_eq!(art.report.schema_version, SCHEMA_VERSION);
    assert_eq!(SCHEMA_VERSION, "1.0.0");
    let loaded = Report::load(&art.dir.join("report.json")).unwrap();
    assert_eq!(loaded.content_hash, art.report.content_hash);
    for t in &art.report.traces {
        let mut r = csv::Reader::from_path(art.dir.join(t)).unwrap();
        assert!(!r.headers().unwrap().is_empty());
    }
    assert!(art.dir.file_name().unwrap().to_str().unwrap().starts_with("tap-"));
}

#[test]
fn missing_mixture_exits_with_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "experiment = \"anneal\"\nseed = 1\n").unwrap();
    let out = bin().args(["--out", dir.path().to_str().unwrap(), "run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing field `mixture`"), "{err}");
}

#[test]
fn unknown_fields_are_rejected() {
    let err = ExperimentConfig::from_toml_str("experiment = \"tap\"\nseed = 1\n[tap]\nnn = 3\n").unwrap_err();
    assert!(err.to_string().contains("nn"), "{err}");
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Advice, 5);
    // a two-well target never gets this far from the adversarial start's TV of 1/2
    cfg.advice = Some(AdviceConfig { runs: 2, horizon: 1.0, tv_adversarial: 0.9, ..Default::default() });
    let path = dir.path().join("advice.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    let out = bin().args(["--out", dir.path().to_str().unwrap(), "run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL] adversarial_stuck"));
}

#[test]
fn cli_flags_override_and_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--out", dir.path().to_str().unwrap(), "thresholds", "--mixture", "2:0.1,3:0.05", "--seed", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS] threshold_order"));
}

#[test]
fn disorder_dump_matches_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.bin");
    let out = bin()
        .args(["disorder", "--mixture", "2:0.3,3:0.1", "--n", "5", "--seed", "11", "--file", file.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (n, tensors) = read_raw(&file).unwrap();
    assert_eq!(n, 5);
    assert_eq!(tensors[1], (3, raw_disorder(11, 3, 5)));
    assert!(dir.path().join("d.json").exists());
}
