use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use molres::experiment::{evaluate_pipeline, filter_sweep, Engine, ExperimentResult};
use molres::tasks::make_forecast_task;
use molres::{ChannelParams, ReservoirConfig, StochasticConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_molres"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn molres(sub: &str, config: &Path, out: &Path, seed: u64) -> Output {
    bin()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", &seed.to_string()])
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn result(out: &Path) -> ExperimentResult {
    serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

#[test]
fn evaluate_writes_every_artifact_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let config = shipped("evaluate_transformation.json");
    for out in [&a, &b] {
        let o = molres("evaluate", &config, out, 0);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(summary["nrmse_det"].as_f64().unwrap() < 0.35);
    }
    let res = result(&a);
    assert_eq!(res.schema_version, 1);
    for f in &res.artifacts {
        assert!(a.join(f).is_file(), "{f}");
    }
    for f in [
        "config.json",
        "result.json",
        "traces/task.csv",
        "traces/bound_fraction.csv",
        "traces/dataset.csv",
        "traces/readout.csv",
        "traces/predictions.csv",
    ] {
        let first = fs::read(a.join(f)).unwrap();
        assert_eq!(
            first,
            fs::read(b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let snapshot: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["schema_version"], 1);
    assert_eq!(snapshot["mode"], "evaluate");
    let header = fs::read_to_string(a.join("traces/bound_fraction.csv")).unwrap();
    assert!(header.starts_with("t,b\n"));
}

#[test]
fn missing_section_exits_two_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema_version": 1, "mode": "evaluate", "task": {"kind": "sine_to_square"}}"#,
    );
    let o = molres("evaluate", &cfg, &tmp.path().join("out"), 0);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("channel") && err.contains("c.json"), "{err}");
}

#[test]
fn malformed_json_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        "{\n  \"schema_version\": 1,\n  \"mode\": \"evaluate\",,\n}",
    );
    let o = molres("evaluate", &cfg, &tmp.path().join("out"), 0);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_field_and_wrong_mode_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema_version": 1, "task": {"kind": "sine_to_square", "colour": 3}}"#,
    );
    let o = molres("evaluate", &cfg, &tmp.path().join("out"), 0);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let o = molres(
        "optimize",
        &shipped("evaluate_forecasting.json"),
        &tmp.path().join("out2"),
        0,
    );
    assert_eq!(o.status.code(), Some(2));

    let missing = tmp.path().join("nope.json");
    let o = molres("evaluate", &missing, &tmp.path().join("out3"), 0);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_cap_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
  "schema_version": 1,
  "mode": "evaluate",
  "engine": "stochastic",
  "task": {"kind": "sine_to_square", "num_symbols": 200},
  "channel": {"k_on": 1.55e-17, "k_off": 2.78, "symbol_duration": 1.22, "distance_um": 4.09,
              "n_max": 19925, "diffusion": 1.82e-10, "memory_window": 5},
  "stochastic": {"work_cap": 1000.0}
}"#,
    );
    let o = molres("evaluate", &cfg, &tmp.path().join("out"), 0);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_max = 19925"));
}

#[test]
fn constant_targets_exit_four() {
    let tmp = tempfile::tempdir().unwrap();
    let mut series = String::from("n,u,y\n");
    for n in 0..300 {
        series.push_str(&format!("{n},{},0.5\n", (n % 7) as f64 / 7.0));
    }
    fs::write(tmp.path().join("flat.csv"), series).unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
  "schema_version": 1,
  "mode": "evaluate",
  "task": {"kind": "sine_to_square", "num_symbols": 300, "series_csv": "flat.csv"},
  "channel": {"k_on": 1.55e-17, "k_off": 2.78, "symbol_duration": 1.22, "distance_um": 4.09,
              "n_max": 19925, "diffusion": 1.82e-10, "memory_window": 5}
}"#,
    );
    let o = molres("evaluate", &cfg, &tmp.path().join("out"), 0);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("constant"));
}

#[test]
fn short_optimize_improves_on_its_initial_design() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
  "schema_version": 1,
  "mode": "optimize",
  "task": {"kind": "sine_to_square", "num_symbols": 600},
  "optimize": {"budget": 30, "init": 10}
}"#,
    );
    let out = tmp.path().join("out");
    let o = molres("optimize", &cfg, &out, 3);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = result(&out);
    let best = res.best.as_ref().unwrap().nrmse;
    let initial = res.initial_best.unwrap();
    assert!(best < initial, "best {best} vs initial {initial}");

    let log = fs::read_to_string(out.join("trials.jsonl")).unwrap();
    let trials: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(trials.len(), 30);
    let logged_best = trials
        .iter()
        .filter_map(|t| t["objective"].as_f64())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(logged_best, best);

    let top = fs::read_to_string(out.join("top10.csv")).unwrap();
    let mut lines = top.lines();
    assert_eq!(
        lines.next().unwrap(),
        "rank,trial,nrmse,k_on,k_off,symbol_duration,distance_um,n_max,diffusion,memory_window,k_d"
    );
    assert_eq!(lines.count(), 10);
}

#[test]
fn preset_crisscross_matrix_is_not_symmetric() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = molres("crisscross", &shipped("crisscross_presets.json"), &out, 0);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = result(&out).crisscross.unwrap();
    let asym = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .any(|(i, j)| m.nrmse[i][j] != m.nrmse[j][i]);
    assert!(asym);
    let csv = fs::read_to_string(out.join("crisscross.csv")).unwrap();
    assert!(csv.starts_with("param_set,"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn stochastic_compare_runs_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
  "schema_version": 1,
  "mode": "stochastic_compare",
  "task": {"kind": "forecast_mg", "num_symbols": 120},
  "channel": {"k_on": 6.64e-19, "k_off": 4.15, "symbol_duration": 1.0, "distance_um": 5.12,
              "n_max": 1500, "diffusion": 1.02e-11, "memory_window": 1},
  "stochastic": {"num_replicates": 2},
  "stochastic_compare": {"filter_window": 200}
}"#,
    );
    let out = tmp.path().join("out");
    let o = molres("stochastic-compare", &cfg, &out, 1);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = result(&out);
    assert!(res.nrmse_det.unwrap() >= 0.0);
    assert!(res.nrmse_stoch_raw.unwrap() >= 0.0);
    assert!(res.nrmse_stoch_filtered.unwrap() >= 0.0);
    assert_eq!(res.filter_window, Some(200));
    for f in [
        "traces/deterministic.csv",
        "traces/stochastic_raw.csv",
        "traces/stochastic_filtered.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn cached_sweep_matches_fresh_runs() {
    let params = ChannelParams {
        n_max: 1500,
        symbol_duration: 1.0,
        memory_window: 1,
        ..ChannelParams::FORECASTING
    };
    let raw = molres::tasks::MackeyGlass::default()
        .generate(126, 1)
        .unwrap();
    let task = make_forecast_task(&raw, 6).unwrap();
    let reservoir = ReservoirConfig::default();
    let cfg = StochasticConfig {
        num_replicates: 2,
        rng_seed: 4,
        ..Default::default()
    };
    let windows = [1, 50, 400];
    let rows = filter_sweep(&params, &task, &reservoir, &cfg, &windows).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.window).collect::<Vec<_>>(),
        vec![0, 1, 50, 400]
    );
    for row in &rows {
        let fresh = evaluate_pipeline(
            &params,
            &task,
            &ReservoirConfig {
                filter_window: row.window,
                ..reservoir
            },
            &Engine::Stochastic(cfg),
        )
        .unwrap();
        assert_eq!(
            fresh.nrmse.to_bits(),
            row.nrmse.to_bits(),
            "window {}",
            row.window
        );
    }
    assert_eq!(rows[0].nrmse.to_bits(), rows[1].nrmse.to_bits());
}
