use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::num::Num;
use crate::params::ChannelParams;
use crate::receptor::{self, BoundFractionTrace};
use crate::reservoir::{self, ReadoutWeights, ReservoirConfig, ReservoirDataset};
use crate::stochastic::{self, StochasticConfig};
use crate::tasks::{nrmse, TaskSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    Deterministic,
    Stochastic(StochasticConfig),
}

/// Test-split prediction of one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub n: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub nrmse: f64,
    /// Trace the states were sampled from (after filtering, if any).
    pub trace: BoundFractionTrace,
    pub dataset: ReservoirDataset,
    pub train_rows: usize,
    pub weights: ReadoutWeights,
    pub predictions: Vec<Prediction>,
}

pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("n,y_true,y_pred\n");
    for p in predictions {
        out.push_str(&format!("{},{},{}\n", p.n, Num(p.y_true), Num(p.y_pred)));
    }
    out
}

/// Reservoir settings with the memory window taken from the channel
/// parameters, which is where the optimizer tunes it.
pub fn effective_reservoir(params: &ChannelParams, reservoir: &ReservoirConfig) -> ReservoirConfig {
    ReservoirConfig {
        memory_window: params.memory_window,
        ..*reservoir
    }
}

/// Raw bound-fraction trace for the task inputs.
pub fn simulate_trace(
    params: &ChannelParams,
    task: &TaskSeries,
    engine: &Engine,
) -> Result<BoundFractionTrace> {
    match engine {
        Engine::Deterministic => receptor::simulate(params, &task.inputs),
        Engine::Stochastic(cfg) => stochastic::run_stochastic(params, &task.inputs, cfg),
    }
}

/// Readout training and test scoring on an existing raw trace; the
/// reservoir's filter window is applied first.
pub fn evaluate_trace(
    raw: &BoundFractionTrace,
    params: &ChannelParams,
    task: &TaskSeries,
    reservoir: &ReservoirConfig,
) -> Result<PipelineOutput> {
    let cfg = effective_reservoir(params, reservoir);
    cfg.validate()?;
    let trace = if cfg.filter_window > 0 {
        reservoir::moving_average_filter(raw, cfg.filter_window)?
    } else {
        raw.clone()
    };
    let states = reservoir::build_states(&trace, params, &cfg, task.len())?;
    let dataset = reservoir::assemble_dataset(&states, &task.targets, &cfg)?;
    let (train, test) = dataset.split(cfg.train_fraction)?;
    let weights = reservoir::train_readout(&train, cfg.ridge)?;
    let y_pred = reservoir::predict_all(&weights, &test)?;
    let y_true: Vec<f64> = test.targets.iter().copied().collect();
    let score = nrmse(&y_true, &y_pred)?;
    let predictions = test
        .symbols
        .iter()
        .zip(y_true.iter().zip(&y_pred))
        .map(|(&n, (&y_true, &y_pred))| Prediction { n, y_true, y_pred })
        .collect();
    Ok(PipelineOutput {
        nrmse: score,
        trace,
        train_rows: train.len(),
        dataset,
        weights,
        predictions,
    })
}

/// Encode, simulate, sample states, train on the training split and
/// score the test split.
pub fn evaluate_pipeline(
    params: &ChannelParams,
    task: &TaskSeries,
    reservoir: &ReservoirConfig,
    engine: &Engine,
) -> Result<PipelineOutput> {
    params.validate()?;
    let raw = simulate_trace(params, task, engine)?;
    evaluate_trace(&raw, params, task, reservoir)
}

/// Test NRMSE only; the optimizer objective.
pub fn deterministic_nrmse(
    params: &ChannelParams,
    task: &TaskSeries,
    reservoir: &ReservoirConfig,
) -> Result<f64> {
    evaluate_pipeline(params, task, reservoir, &Engine::Deterministic).map(|o| o.nrmse)
}
