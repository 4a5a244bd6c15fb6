use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    ChannelSpec, EngineKind, ExperimentConfig, Mode, NamedChannel, TaskSpec, SCHEMA_VERSION,
};
use super::pipeline::{evaluate_pipeline, evaluate_trace, predictions_csv, Engine};
use crate::bayesopt::{optimize, OptimizeOptions, SearchSpace, Trial, TrialSource, TrialStatus};
use crate::error::{Error, Result};
use crate::num::Num;
use crate::params::ChannelParams;
use crate::reservoir::ReservoirConfig;
use crate::stochastic::{self, StochasticConfig};
use crate::tasks::TaskSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTrial {
    pub trial: usize,
    pub nrmse: f64,
    pub channel: ChannelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrisscrossMatrix {
    /// Row labels (parameter sets).
    pub sets: Vec<String>,
    /// Column labels (tasks).
    pub tasks: Vec<String>,
    /// `nrmse[row][column]`.
    pub nrmse: Vec<Vec<f64>>,
}

impl CrisscrossMatrix {
    /// Header `param_set,<task>...`, one row per parameter set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param_set");
        for t in &self.tasks {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (name, row) in self.sets.iter().zip(&self.nrmse) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{}", Num(*v)));
            }
            out.push('\n');
        }
        out
    }

    /// Row index of the minimum in each column.
    pub fn column_argmin(&self) -> Vec<usize> {
        (0..self.tasks.len())
            .map(|c| {
                (0..self.sets.len())
                    .min_by(|&a, &b| self.nrmse[a][c].total_cmp(&self.nrmse[b][c]))
                    .unwrap_or(0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// 0 is the unfiltered baseline.
    pub window: usize,
    pub nrmse: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("window,nrmse\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.window, Num(r.nrmse)));
    }
    out
}

/// Summary written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub mode: Mode,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nrmse_det: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nrmse_stoch_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nrmse_stoch_filtered: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<BestTrial>,
    /// Best objective among the initial quasi-random design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_best: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials_failed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_log: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crisscross: Option<CrisscrossMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_sweep: Option<Vec<SweepRow>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    /// Files written, relative to the run directory.
    pub artifacts: Vec<String>,
}

impl ExperimentResult {
    fn new(mode: Mode, rng_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mode,
            rng_seed,
            nrmse_det: None,
            nrmse_stoch_raw: None,
            nrmse_stoch_filtered: None,
            filter_window: None,
            best: None,
            initial_best: None,
            trials_failed: None,
            trial_log: None,
            crisscross: None,
            filter_sweep: None,
            diagnostics: Vec::new(),
            artifacts: Vec::new(),
        }
    }
}

/// One line of `trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ChannelSpec>,
    pub point: Vec<f64>,
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub duration_s: f64,
    pub source: TrialSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn new(trial: &Trial, space: &SearchSpace) -> Self {
        Self {
            index: trial.index,
            params: space
                .channel_params(&trial.point)
                .ok()
                .map(ChannelSpec::from),
            point: trial.point.clone(),
            objective: trial.objective,
            status: trial.status,
            duration_s: trial.duration_s,
            source: trial.source,
            error: trial.error.clone(),
        }
    }
}

/// Parallel-coordinates export of the best `count` successful trials,
/// with the dissociation constant `K_D = k_off / k_on` appended.
pub fn top_trials_csv(trials: &[Trial], space: &SearchSpace, count: usize) -> String {
    let mut out = String::from("rank,trial,nrmse");
    for name in space.names() {
        out.push(',');
        out.push_str(if name == "distance" {
            "distance_um"
        } else {
            name
        });
    }
    out.push_str(",k_d\n");
    for (rank, t) in trials
        .iter()
        .filter(|t| t.objective.is_some())
        .take(count)
        .enumerate()
    {
        out.push_str(&format!(
            "{},{},{}",
            rank + 1,
            t.index,
            Num(t.objective.unwrap_or(f64::NAN))
        ));
        for (d, v) in space.dims.iter().zip(&t.point) {
            let v = if d.name == "distance" { v * 1e6 } else { *v };
            out.push_str(&format!(",{}", Num(v)));
        }
        let kd = space
            .channel_params(&t.point)
            .map(|p| p.dissociation_constant())
            .unwrap_or(f64::NAN);
        out.push_str(&format!(",{}\n", Num(kd)));
    }
    out
}

struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("traces")).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(rel.to_owned());
        Ok(())
    }
}

/// Evaluate every (parameter set, task) pair; rows are sets.
pub fn crisscross(
    sets: &[(String, ChannelParams)],
    tasks: &[(String, TaskSeries)],
    reservoir: &ReservoirConfig,
) -> Result<CrisscrossMatrix> {
    let cells: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|r| (0..tasks.len()).map(move |c| (r, c)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(r, c)| {
            evaluate_pipeline(&sets[r].1, &tasks[c].1, reservoir, &Engine::Deterministic)
                .map(|o| o.nrmse)
        })
        .collect::<Result<_>>()?;
    Ok(CrisscrossMatrix {
        sets: sets.iter().map(|s| s.0.clone()).collect(),
        tasks: tasks.iter().map(|t| t.0.clone()).collect(),
        nrmse: values.chunks(tasks.len()).map(|c| c.to_vec()).collect(),
    })
}

/// NRMSE of the stochastic pipeline for the unfiltered baseline and each
/// window, all scored on one set of averaged replicate traces.
pub fn filter_sweep(
    params: &ChannelParams,
    task: &TaskSeries,
    reservoir: &ReservoirConfig,
    stochastic_cfg: &StochasticConfig,
    windows: &[usize],
) -> Result<Vec<SweepRow>> {
    let raw = stochastic::run_stochastic(params, &task.inputs, stochastic_cfg)?;
    sweep_cached(&raw, params, task, reservoir, windows)
}

pub(crate) fn sweep_cached(
    raw: &crate::receptor::BoundFractionTrace,
    params: &ChannelParams,
    task: &TaskSeries,
    reservoir: &ReservoirConfig,
    windows: &[usize],
) -> Result<Vec<SweepRow>> {
    let mut all = vec![0];
    all.extend(windows.iter().copied().filter(|w| *w > 0));
    all.par_iter()
        .map(|&window| {
            let cfg = ReservoirConfig {
                filter_window: window,
                ..*reservoir
            };
            evaluate_trace(raw, params, task, &cfg).map(|o| SweepRow {
                window,
                nrmse: o.nrmse,
            })
        })
        .collect()
}

fn task_label(spec: &TaskSpec) -> String {
    match spec.kind {
        crate::tasks::TaskKind::SineToSquare => spec.kind.as_str().to_owned(),
        _ if spec.horizon.is_none() => spec.kind.as_str().to_owned(),
        _ => format!("{}_p{}", spec.kind.as_str(), spec.horizon()),
    }
}

/// Run one experiment and write its artifacts under `out`.
///
/// `seed` drives the optimizer and the particle engine; the benchmark
/// series are seeded by the task section so that runs with different
/// seeds score the same data. `base` resolves relative paths inside the
/// configuration.
pub fn run(
    config: &ExperimentConfig,
    mode: Mode,
    out: &Path,
    seed: u64,
    base: Option<&Path>,
) -> Result<ExperimentResult> {
    config.validate_for(mode)?;
    let mut snapshot = config.clone();
    snapshot.mode = Some(mode);
    snapshot.rng_seed = seed;
    let mut dir = RunDir::create(out)?;
    dir.write("config.json", &snapshot.to_json())?;

    let stochastic_cfg = StochasticConfig {
        rng_seed: seed,
        ..config.stochastic
    };
    let mut result = ExperimentResult::new(mode, seed);
    match mode {
        Mode::Evaluate => {
            let task = config.require_task(mode)?.build(base)?;
            let params = config.require_channel(mode)?;
            let engine = match config.engine {
                EngineKind::Deterministic => Engine::Deterministic,
                EngineKind::Stochastic => Engine::Stochastic(stochastic_cfg),
            };
            let out = evaluate_pipeline(&params, &task, &config.reservoir, &engine)?;
            match (config.engine, config.reservoir.filter_window) {
                (EngineKind::Deterministic, _) => result.nrmse_det = Some(out.nrmse),
                (EngineKind::Stochastic, 0) => result.nrmse_stoch_raw = Some(out.nrmse),
                (EngineKind::Stochastic, w) => {
                    result.nrmse_stoch_filtered = Some(out.nrmse);
                    result.filter_window = Some(w);
                }
            }
            result.diagnostics.extend(out.weights.diagnostic.clone());
            dir.write("traces/task.csv", &task.to_csv())?;
            dir.write("traces/bound_fraction.csv", &out.trace.to_csv())?;
            dir.write("traces/dataset.csv", &out.dataset.to_csv())?;
            dir.write("traces/readout.csv", &out.weights.to_csv())?;
            dir.write("traces/predictions.csv", &predictions_csv(&out.predictions))?;
        }
        Mode::Optimize => {
            let task = config.require_task(mode)?.build(base)?;
            let spec = config.optimize.clone().unwrap_or_default();
            let space = spec.search_space();
            let opts = OptimizeOptions {
                budget: spec.budget,
                init: spec.init,
                seed,
                gp: crate::bayesopt::GpFitOptions {
                    restarts: spec.gp_restarts,
                    seed,
                    ..Default::default()
                },
                ..Default::default()
            };
            let log_path = dir.root.join("trials.jsonl");
            let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            let mut log = BufWriter::new(file);
            let reservoir = config.reservoir;
            let objective = |point: &[f64]| {
                let params = space.channel_params(point)?;
                super::pipeline::deterministic_nrmse(&params, &task, &reservoir)
            };
            let trials = optimize(objective, &space, &opts, |t| {
                let line =
                    serde_json::to_string(&TrialRecord::new(t, &space)).expect("trial serializes");
                writeln!(log, "{line}")
                    .and_then(|_| log.flush())
                    .map_err(|e| Error::io(&log_path, e))
            })?;
            drop(log);
            dir.written.push("trials.jsonl".into());
            result.trial_log = Some("trials.jsonl".into());
            result.trials_failed = Some(trials.iter().filter(|t| !t.is_ok()).count());
            result.initial_best = trials
                .iter()
                .filter(|t| t.index < spec.init)
                .filter_map(|t| t.objective)
                .reduce(f64::min);
            dir.write("top10.csv", &top_trials_csv(&trials, &space, 10))?;
            if let Some(best) = trials.first().filter(|t| t.is_ok()) {
                if let Ok(params) = space.channel_params(&best.point) {
                    result.best = Some(BestTrial {
                        trial: best.index,
                        nrmse: best.objective.unwrap_or(f64::NAN),
                        channel: params.into(),
                    });
                    let out = evaluate_pipeline(
                        &params,
                        &task,
                        &config.reservoir,
                        &Engine::Deterministic,
                    )?;
                    dir.write(
                        "traces/best_predictions.csv",
                        &predictions_csv(&out.predictions),
                    )?;
                }
            }
        }
        Mode::Crisscross => {
            let cc = config.require_crisscross(mode)?;
            let sets: Vec<(String, ChannelParams)> = cc
                .sets
                .iter()
                .map(|NamedChannel { name, channel }| {
                    channel.to_params().map(|p| (name.clone(), p))
                })
                .collect::<Result<_>>()?;
            let tasks: Vec<(String, TaskSeries)> = cc
                .tasks
                .iter()
                .map(|t| t.build(base).map(|s| (task_label(t), s)))
                .collect::<Result<_>>()?;
            let matrix = crisscross(&sets, &tasks, &config.reservoir)?;
            dir.write("crisscross.csv", &matrix.to_csv())?;
            result.crisscross = Some(matrix);
        }
        Mode::StochasticCompare => {
            let task = config.require_task(mode)?.build(base)?;
            let params = config.require_channel(mode)?;
            let window = config
                .stochastic_compare
                .clone()
                .unwrap_or_default()
                .filter_window;
            let unfiltered = ReservoirConfig {
                filter_window: 0,
                ..config.reservoir
            };
            let det = evaluate_pipeline(&params, &task, &unfiltered, &Engine::Deterministic)?;
            let raw_trace = stochastic::run_stochastic(&params, &task.inputs, &stochastic_cfg)?;
            let raw = evaluate_trace(&raw_trace, &params, &task, &unfiltered)?;
            let filtered = evaluate_trace(
                &raw_trace,
                &params,
                &task,
                &ReservoirConfig {
                    filter_window: window,
                    ..unfiltered
                },
            )?;
            result.nrmse_det = Some(det.nrmse);
            result.nrmse_stoch_raw = Some(raw.nrmse);
            result.nrmse_stoch_filtered = Some(filtered.nrmse);
            result.filter_window = Some(window);
            dir.write("traces/task.csv", &task.to_csv())?;
            dir.write("traces/deterministic.csv", &det.trace.to_csv())?;
            dir.write("traces/stochastic_raw.csv", &raw.trace.to_csv())?;
            dir.write("traces/stochastic_filtered.csv", &filtered.trace.to_csv())?;
            dir.write(
                "traces/predictions_det.csv",
                &predictions_csv(&det.predictions),
            )?;
            dir.write(
                "traces/predictions_stoch_raw.csv",
                &predictions_csv(&raw.predictions),
            )?;
            dir.write(
                "traces/predictions_stoch_filtered.csv",
                &predictions_csv(&filtered.predictions),
            )?;
        }
        Mode::FilterSweep => {
            let task = config.require_task(mode)?.build(base)?;
            let params = config.require_channel(mode)?;
            let windows = config.filter_sweep.clone().unwrap_or_default().windows;
            let raw_trace = stochastic::run_stochastic(&params, &task.inputs, &stochastic_cfg)?;
            let rows = sweep_cached(&raw_trace, &params, &task, &config.reservoir, &windows)?;
            dir.write("traces/stochastic_raw.csv", &raw_trace.to_csv())?;
            dir.write("filter_sweep.csv", &sweep_csv(&rows))?;
            result.nrmse_stoch_raw = rows.first().map(|r| r.nrmse);
            if let Some(best) = rows
                .iter()
                .skip(1)
                .min_by(|a, b| a.nrmse.total_cmp(&b.nrmse))
            {
                result.nrmse_stoch_filtered = Some(best.nrmse);
                result.filter_window = Some(best.window);
            }
            result.filter_sweep = Some(rows);
        }
    }
    dir.written.push("result.json".into());
    result.artifacts = dir.written.clone();
    let json = serde_json::to_string_pretty(&result).expect("result serializes");
    let path = dir.root.join("result.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(result)
}
