//! The biophysical and readout knobs of the channel reservoir.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seven-dimensional parameter vector searched by the optimizer.
///
/// All physical quantities are SI. The CLI and configuration files accept
/// the distance in micrometres and convert on load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Association rate constant, m³/s.
    pub k_on: f64,
    /// Dissociation rate constant, 1/s.
    pub k_off: f64,
    /// Symbol duration T, s.
    pub symbol_duration: f64,
    /// Transmitter to receiver-centre distance d, m.
    pub distance: f64,
    /// Molecules released for a full-scale input u = 1.
    pub n_max: u32,
    /// Diffusion coefficient D, m²/s.
    pub diffusion: f64,
    /// Number of recent reservoir states concatenated at the readout.
    pub memory_window: usize,
}

impl ChannelParams {
    /// Forecasting (Mackey-Glass) optimum of the deterministic model.
    pub const FORECASTING: ChannelParams = ChannelParams {
        k_on: 6.64e-19,
        k_off: 4.15,
        symbol_duration: 1.99,
        distance: 5.12e-6,
        n_max: 19400,
        diffusion: 1.02e-11,
        memory_window: 5,
    };

    /// Sine-to-square transformation optimum.
    pub const TRANSFORMATION: ChannelParams = ChannelParams {
        k_on: 1.55e-17,
        k_off: 2.78,
        symbol_duration: 1.22,
        distance: 4.09e-6,
        n_max: 19925,
        diffusion: 1.82e-10,
        memory_window: 5,
    };

    /// Hybrid (cubed Mackey-Glass) optimum.
    pub const HYBRID: ChannelParams = ChannelParams {
        k_on: 2.47e-18,
        k_off: 2.31,
        symbol_duration: 1.50,
        distance: 5.35e-6,
        n_max: 11030,
        diffusion: 1.47e-11,
        memory_window: 5,
    };

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_on", self.k_on),
            ("k_off", self.k_off),
            ("symbol_duration", self.symbol_duration),
            ("distance", self.distance),
            ("diffusion", self.diffusion),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::validation(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if self.n_max < 1 {
            return Err(Error::validation("n_max must be at least 1"));
        }
        if self.memory_window < 1 {
            return Err(Error::validation("memory_window must be at least 1"));
        }
        let kd = self.dissociation_constant();
        if !kd.is_finite() || kd <= 0.0 {
            return Err(Error::validation(format!(
                "K_D = k_off/k_on must be finite and positive, got {kd}"
            )));
        }
        Ok(())
    }

    /// Affinity K_D = k_off / k_on, molecules/m³.
    pub fn dissociation_constant(&self) -> f64 {
        self.k_off / self.k_on
    }

    /// Time of the single interior maximum of the impulse response, d²/(6D).
    pub fn peak_time(&self) -> f64 {
        self.distance * self.distance / (6.0 * self.diffusion)
    }
}
