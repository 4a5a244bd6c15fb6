//! Mean-field ligand-receptor binding driven by the channel concentration.
//!
//! `db/dt = k_on c_R(t) (1 - b) - k_off b` is advanced with the exact
//! solution for a drive held constant over each step (sampled at the step
//! midpoint). Each update is a convex combination of the previous value and
//! the steady state `b_inf = k_on c / (k_on c + k_off)`, so samples can
//! never leave `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::channel;
use crate::error::{Error, Result};
use crate::num::Num;
use crate::params::ChannelParams;

/// Uniformly sampled bound fraction, `samples[i] = b(t0 + i dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFractionTrace {
    pub dt: f64,
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl BoundFractionTrace {
    pub fn new(dt: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::validation(format!("trace dt must be > 0, got {dt}")));
        }
        if samples.is_empty() {
            return Err(Error::validation("trace has no samples"));
        }
        if let Some(b) = samples.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::validation(format!(
                "bound fraction {b} outside [0, 1]"
            )));
        }
        Ok(Self { dt, t0, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> f64 {
        self.time_of(self.samples.len() - 1)
    }

    /// Nearest-sample lookup, `None` outside the trace.
    pub fn sample_near(&self, t: f64) -> Option<f64> {
        let pos = ((t - self.t0) / self.dt).round();
        if pos < 0.0 {
            return None;
        }
        self.samples.get(pos as usize).copied()
    }

    /// CSV with header `t,b`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,b\n");
        for (i, b) in self.samples.iter().enumerate() {
            out.push_str(&format!("{},{}\n", Num(self.time_of(i)), Num(*b)));
        }
        out
    }
}

/// Step size used when the caller does not pick one: 200 samples per symbol.
pub fn default_dt(params: &ChannelParams) -> f64 {
    params.symbol_duration / 200.0
}

/// One exact step of the binding ODE under constant concentration `c`.
#[inline]
pub fn binding_step(b: f64, c: f64, k_on: f64, k_off: f64, dt: f64) -> f64 {
    let drive = k_on * c;
    let rate = drive + k_off;
    let steady = drive / rate;
    let next = steady + (b - steady) * (-rate * dt).exp();
    next.clamp(0.0, 1.0)
}

/// Steady-state occupancy for a constant concentration.
pub fn steady_state(params: &ChannelParams, c: f64) -> f64 {
    let drive = params.k_on * c;
    drive / (drive + params.k_off)
}

/// Integrate the binding ODE over `[0, horizon]` from `b(0) = b0`.
///
/// The returned trace has `round(horizon / dt) + 1` samples starting at
/// `t = 0`.
pub fn integrate_binding(
    params: &ChannelParams,
    inputs: &[f64],
    horizon: f64,
    dt: f64,
    b0: f64,
) -> Result<BoundFractionTrace> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::validation(format!("dt must be > 0, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::validation(format!(
            "horizon {horizon} must be at least one step of {dt}"
        )));
    }
    if !(0.0..=1.0).contains(&b0) {
        return Err(Error::validation(format!("b0 = {b0} outside [0, 1]")));
    }
    let steps = (horizon / dt).round() as usize;
    let conc = channel::concentration_profile(params, inputs, dt, steps)?;
    Ok(integrate_profile(params, &conc, dt, b0))
}

/// Integrate against a precomputed midpoint concentration profile.
pub fn integrate_profile(
    params: &ChannelParams,
    midpoint_conc: &[f64],
    dt: f64,
    b0: f64,
) -> BoundFractionTrace {
    let mut samples = Vec::with_capacity(midpoint_conc.len() + 1);
    let mut b = b0;
    samples.push(b);
    for &c in midpoint_conc {
        b = binding_step(b, c, params.k_on, params.k_off, dt);
        samples.push(b);
    }
    BoundFractionTrace {
        dt,
        t0: 0.0,
        samples,
    }
}

/// Deterministic trace for a whole input sequence at the default grid.
pub fn simulate(params: &ChannelParams, inputs: &[f64]) -> Result<BoundFractionTrace> {
    let horizon = params.symbol_duration * inputs.len() as f64;
    integrate_binding(params, inputs, horizon, default_dt(params), 0.0)
}
