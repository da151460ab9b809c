use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecplane(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecplane"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ECPLANE_CONFIG")
        .env_remove("ECPLANE_SEED")
        .output()
        .expect("binary runs")
}

fn small_model(dir: &Path) {
    fs::write(
        dir.join("model.json"),
        r#"{"n_countries": 30, "n_products": 60, "n_capabilities": 10, "n_years": 3, "seed": 4}"#,
    )
    .unwrap();
}

fn files_config(dir: &Path, extra: &str) {
    fs::write(
        dir.join("config.json"),
        format!(
            r#"{{
  "input": {{"files": {{"trade": "data/trade.csv", "gdp": "data/gdp.csv"}}}},
  "grid": {{"nx": 6, "ny": 6, "min_count": 2}},
  "bootstrap": {{"n_resamples": 20}},
  "seed": 1{extra}
}}"#
        ),
    )
    .unwrap();
}

#[test]
fn synth_then_full_run() {
    let dir = tempfile::tempdir().unwrap();
    small_model(dir.path());
    let o = ecplane(
        &[
            "synth",
            "panel",
            "--model",
            "model.json",
            "--null-draws",
            "10",
            "--out",
            "data",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trade.csv", "gdp.csv", "nestedness.json"] {
        assert!(dir.path().join("data").join(f).is_file(), "{f}");
    }
    files_config(dir.path(), "");
    let o = ecplane(
        &["run", "--config", "config.json", "--out", "out", "--lags", "1..2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["spearman_xy"].is_number());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 5);
    assert!(dir.path().join("out/report/fields.svg").is_file());
    assert!(dir.path().join("out/plane/displacements.csv").is_file());

    let o = ecplane(&["report", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    small_model(dir.path());
    assert!(ecplane(
        &[
            "synth",
            "panel",
            "--model",
            "model.json",
            "--null-draws",
            "5",
            "--out",
            "data"
        ],
        dir.path()
    )
    .status
    .success());
    files_config(dir.path(), "");
    let o = ecplane(&["metrics", "--config", "config.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("metrics: missing artifact"));
    for stage in ["ingest", "metrics", "plane", "fields", "market"] {
        let o = ecplane(&[stage, "--config", "config.json"], dir.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{stage}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(dir.path().join("out/market/histograms.csv").is_file());
}

#[test]
fn missing_gdp_is_a_validation_error_in_ingest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("trade.csv"), "year,country,product,value\n2000,A,p,1\n").unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"input": {"files": {"trade": "trade.csv"}}, "seed": 1}"#,
    )
    .unwrap();
    let o = ecplane(&["run", "--config", "c.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingest"));
}

#[test]
fn config_is_required_and_seed_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ecplane(&["run"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("c.json"), r#"{"input": {"capability": {}}}"#).unwrap();
    let o = ecplane(&["run", "--config", "c.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn non_convergence_exits_four_with_results() {
    let dir = tempfile::tempdir().unwrap();
    small_model(dir.path());
    assert!(ecplane(
        &[
            "synth",
            "panel",
            "--model",
            "model.json",
            "--null-draws",
            "5",
            "--out",
            "data"
        ],
        dir.path()
    )
    .status
    .success());
    files_config(
        dir.path(),
        r#", "metrics": {"convergence": {"stable_iterations": 3, "max_iterations": 3}}"#,
    );
    let o = ecplane(&["run", "--config", "config.json"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/metrics/metrics.csv").is_file());
    assert!(dir.path().join("out/report/summary.json").is_file());
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"input": {"planted": {"n_products": 200, "n_years": 4}}, "seed": 1, "bootstrap": {"n_resamples": 10}}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ecplane"))
        .args(["run"])
        .current_dir(dir.path())
        .env("ECPLANE_CONFIG", "c.json")
        .env("ECPLANE_OUT", "env_out")
        .env("ECPLANE_GRID", "5 5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = fs::read_to_string(dir.path().join("env_out/fields/velocity.csv")).unwrap();
    assert_eq!(v.lines().count(), 1 + 25);
}

#[test]
fn synth_generators_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecplane(&["synth", "planted", "--out", "p", "--lags", "1,3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = fs::read_to_string(dir.path().join("p/displacements.csv")).unwrap();
    assert!(d.lines().nth(1).is_some());
    fs::write(dir.path().join("w.json"), r#"{"n_entities": 100, "n_steps": 20}"#).unwrap();
    let o = ecplane(&["synth", "distortion", "--model", "w.json", "--out", "w"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("w/distortion.json").is_file());
    fs::write(dir.path().join("bad.json"), r#"{"n_entities": 3}"#).unwrap();
    let o = ecplane(
        &["synth", "distortion", "--model", "bad.json", "--out", "w"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}
