//! Benchmark tasks and the NRMSE metric.
//!
//! * Mackey-Glass forecasting: input `x(t)`, target `x(t + P)`.
//! * Sine-to-square: input a sine, target the square wave of the same
//!   fundamental frequency.
//! * Mackey-Glass cubed: forecasting with the target cubed.
//!
//! Inputs are min-max normalized into `[0, 1]` (the release encoding needs
//! it); targets stay on their native scale.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ForecastMg,
    SineToSquare,
    MgCubed,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::ForecastMg,
        TaskKind::SineToSquare,
        TaskKind::MgCubed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::ForecastMg => "forecast_mg",
            TaskKind::SineToSquare => "sine_to_square",
            TaskKind::MgCubed => "mg_cubed",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSeries {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub kind: TaskKind,
    /// Symbols ahead; zero for the transformation task.
    pub horizon: usize,
}

impl TaskSeries {
    pub fn new(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        kind: TaskKind,
        horizon: usize,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::validation(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::validation("task series is empty"));
        }
        if let Some(u) = inputs.iter().find(|u| !(0.0..=1.0).contains(*u)) {
            return Err(Error::validation(format!("task input {u} outside [0, 1]")));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::validation("task targets must be finite"));
        }
        Ok(Self {
            inputs,
            targets,
            kind,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// First `len` symbols.
    pub fn truncated(&self, len: usize) -> TaskSeries {
        let len = len.min(self.len());
        TaskSeries {
            inputs: self.inputs[..len].to_vec(),
            targets: self.targets[..len].to_vec(),
            kind: self.kind,
            horizon: self.horizon,
        }
    }

    /// CSV with header `n,u,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,u,y\n");
        for (n, (u, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            out.push_str(&format!("{n},{},{}\n", Num(*u), Num(*y)));
        }
        out
    }

    /// Load an externally produced series with columns `n,u,y`.
    pub fn read_csv(path: &Path, kind: TaskKind, horizon: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (line, record) in reader.deserialize::<(usize, f64, f64)>().enumerate() {
            let (_, u, y) = record.map_err(|e| Error::Config {
                path: path.to_path_buf(),
                message: format!("row {}: {e}", line + 2),
            })?;
            inputs.push(u);
            targets.push(y);
        }
        TaskSeries::new(inputs, targets, kind, horizon).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Mackey-Glass delay differential equation and its sampling protocol.
///
/// `dx/dt = beta x(t - tau) / (1 + x(t - tau)^n) - gamma x(t)`, integrated
/// with classical RK4 on a grid where `tau / dt` is an integer. The delayed
/// value at half steps is the mean of the two neighbouring grid values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MackeyGlass {
    pub beta: f64,
    pub gamma: f64,
    pub exponent: f64,
    pub delay: f64,
    pub dt: f64,
    /// Constant initial history.
    pub history: f64,
    /// Amplitude of the seeded uniform perturbation added to the history.
    pub perturbation: f64,
    /// Time discarded before the first emitted sample.
    pub transient: f64,
    /// Time between emitted samples (one symbol).
    pub sample_interval: f64,
}

impl Default for MackeyGlass {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            exponent: 10.0,
            delay: 17.0,
            dt: 0.1,
            history: 1.2,
            perturbation: 1e-3,
            transient: 1000.0,
            sample_interval: 1.0,
        }
    }
}

impl MackeyGlass {
    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.powf(self.exponent)) - self.gamma * x
    }

    pub fn generate(&self, length: usize, seed: u64) -> Result<Vec<f64>> {
        if length < 1 {
            return Err(Error::validation("series length must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::validation("Mackey-Glass dt must be positive"));
        }
        let lag_f = self.delay / self.dt;
        let lag = lag_f.round() as usize;
        if lag < 1 || (lag_f - lag as f64).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "delay {} must be an integer multiple of dt {}",
                self.delay, self.dt
            )));
        }
        let per_sample_f = self.sample_interval / self.dt;
        let per_sample = per_sample_f.round() as usize;
        if per_sample < 1 || (per_sample_f - per_sample as f64).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "sample interval {} must be an integer multiple of dt {}",
                self.sample_interval, self.dt
            )));
        }
        let skip = (self.transient / self.dt).round() as usize;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = || {
            if self.perturbation == 0.0 {
                0.0
            } else {
                self.perturbation * rng.random_range(-1.0..=1.0)
            }
        };
        // ring[k % lag] holds x at step k - lag once step k is reached.
        let mut ring: Vec<f64> = (0..lag).map(|_| self.history + jitter()).collect();
        let mut x = self.history + jitter();
        let mut out = Vec::with_capacity(length);
        let h = self.dt;
        let mut step = 0usize;
        while out.len() < length {
            let slot = step % lag;
            let d0 = ring[slot];
            let d1 = if lag == 1 { x } else { ring[(step + 1) % lag] };
            let dm = 0.5 * (d0 + d1);
            let k1 = self.rhs(x, d0);
            let k2 = self.rhs(x + 0.5 * h * k1, dm);
            let k3 = self.rhs(x + 0.5 * h * k2, dm);
            let k4 = self.rhs(x + h * k3, d1);
            ring[slot] = x;
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            step += 1;
            if step > skip && (step - skip).is_multiple_of(per_sample) {
                out.push(x);
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("Mackey-Glass integration diverged".into()));
        }
        Ok(out)
    }
}

/// Mackey-Glass series with the standard chaotic parameters.
pub fn gen_mackey_glass(length: usize, dt_mg: f64, seed: u64) -> Result<Vec<f64>> {
    MackeyGlass {
        dt: dt_mg,
        ..MackeyGlass::default()
    }
    .generate(length, seed)
}

/// Fraction of the sequence used to fit the min-max normalization. The
/// readout trains on (at least) this leading portion, so the test symbols
/// never leak into the scaling.
pub const NORMALIZATION_FIT_FRACTION: f64 = 0.7;

/// Min-max scale into `[0, 1]` using the leading `fit_fraction` of the
/// values, clamping anything outside that range.
pub fn normalize_inputs(values: &[f64], fit_fraction: f64) -> Vec<f64> {
    let fit = ((fit_fraction * values.len() as f64).ceil() as usize).clamp(1, values.len().max(1));
    let (lo, hi) = values[..fit.min(values.len())]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
        .collect()
}

fn forecast_pair(raw: &[f64], horizon: usize) -> Result<(Vec<f64>, &[f64])> {
    if horizon < 1 {
        return Err(Error::validation("forecast horizon must be at least 1"));
    }
    if horizon >= raw.len() {
        return Err(Error::validation(format!(
            "horizon {horizon} needs more than {} raw samples",
            raw.len()
        )));
    }
    let n = raw.len() - horizon;
    Ok((
        normalize_inputs(&raw[..n], NORMALIZATION_FIT_FRACTION),
        &raw[horizon..],
    ))
}

/// `u(n) = x(n)` normalized, `y(n) = x(n + P)`.
pub fn make_forecast_task(raw: &[f64], horizon: usize) -> Result<TaskSeries> {
    let (inputs, targets) = forecast_pair(raw, horizon)?;
    TaskSeries::new(inputs, targets.to_vec(), TaskKind::ForecastMg, horizon)
}

/// As the forecast task with `y(n) = x(n + P)^3`.
pub fn make_mg_cubed_task(raw: &[f64], horizon: usize) -> Result<TaskSeries> {
    let (inputs, targets) = forecast_pair(raw, horizon)?;
    let cubed = targets.iter().map(|x| x * x * x).collect();
    TaskSeries::new(inputs, cubed, TaskKind::MgCubed, horizon)
}

/// Sine input and the matching +-1 square wave; `sign(0)` is +1.
pub fn make_sine_to_square(num_symbols: usize, period: usize) -> Result<TaskSeries> {
    if period < 4 {
        return Err(Error::validation(format!(
            "sine period {period} must be >= 4"
        )));
    }
    if num_symbols < period {
        return Err(Error::validation(format!(
            "{num_symbols} symbols do not cover one period of {period}"
        )));
    }
    let mut inputs = Vec::with_capacity(num_symbols);
    let mut targets = Vec::with_capacity(num_symbols);
    for n in 0..num_symbols {
        let phase = n % period;
        let (s, y) = if (2 * phase).is_multiple_of(period) {
            (0.0, 1.0)
        } else {
            let s = (2.0 * PI * phase as f64 / period as f64).sin();
            (s, if s > 0.0 { 1.0 } else { -1.0 })
        };
        inputs.push((0.5 + 0.5 * s).clamp(0.0, 1.0));
        targets.push(y);
    }
    TaskSeries::new(inputs, targets, TaskKind::SineToSquare, 0)
}

/// Normalized root-mean-square error against the test-set mean.
pub fn nrmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::validation(format!(
            "{} targets but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::validation("NRMSE of an empty series"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let (num, den) = y_true
        .iter()
        .zip(y_pred)
        .fold((0.0, 0.0), |(num, den), (y, p)| {
            (num + (y - p) * (y - p), den + (y - mean) * (y - mean))
        });
    // a constant series leaves only rounding residue around its mean
    let scale = y_true.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let floor = y_true.len() as f64 * (4.0 * f64::EPSILON * scale).powi(2);
    if !(den > floor) {
        return Err(Error::UndefinedMetric(
            "target series is constant, NRMSE denominator is zero".into(),
        ));
    }
    let e = (num / den).sqrt();
    if !e.is_finite() {
        return Err(Error::Numerical(format!("NRMSE is not finite ({e})")));
    }
    Ok(e)
}
