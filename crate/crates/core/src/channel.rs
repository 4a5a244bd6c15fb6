//! Mean-field channel physics: the diffusive impulse response and the
//! superposed receiver concentration under a train of molecular pulses.
//!
//! The impulse response is the free-space 3D point-source Green's function
//! evaluated at the receiver centre (transparent receiver):
//!
//! ```text
//! h(t) = (4 pi D t)^(-3/2) exp(-d^2 / (4 D t))
//! ```
//!
//! Symbol `n` releases `u(n) * n_max` molecules at `t = n T`, and the
//! receiver sees the superposition of every past release. No ISI tail is
//! truncated.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::ChannelParams;

/// Concentration per released molecule at the receiver, 1/m³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseResponse {
    diffusion: f64,
    distance: f64,
}

impl ImpulseResponse {
    pub fn new(params: &ChannelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            diffusion: params.diffusion,
            distance: params.distance,
        })
    }

    /// `h(t)` for `t > 0`; zero for `t <= 0` (nothing has arrived yet).
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let four_dt = 4.0 * self.diffusion * t;
        (PI * four_dt).powf(-1.5) * (-self.distance * self.distance / four_dt).exp()
    }

    pub fn peak_time(&self) -> f64 {
        self.distance * self.distance / (6.0 * self.diffusion)
    }
}

pub fn impulse_response_at(params: &ChannelParams, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "impulse response needs t > 0, got {t}"
        )));
    }
    Ok(ImpulseResponse::new(params)?.at(t))
}

pub(crate) fn validate_inputs(inputs: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::validation("input sequence is empty"));
    }
    if let Some((n, u)) = inputs
        .iter()
        .enumerate()
        .find(|(_, u)| !(0.0..=1.0).contains(*u))
    {
        return Err(Error::validation(format!(
            "input u({n}) = {u} lies outside [0, 1]"
        )));
    }
    Ok(())
}

/// Receiver concentration `c_R(t)` in molecules/m³.
///
/// Only symbols with `n T <= t` are visited, so later inputs never touch
/// the result.
pub fn receiver_concentration(params: &ChannelParams, inputs: &[f64], t: f64) -> Result<f64> {
    validate_inputs(inputs)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    let h = ImpulseResponse::new(params)?;
    let n_max = f64::from(params.n_max);
    let period = params.symbol_duration;
    let mut c = 0.0;
    for (n, &u) in inputs.iter().enumerate() {
        let release = n as f64 * period;
        if release > t {
            break;
        }
        c += u * n_max * h.at(t - release);
    }
    Ok(c)
}

/// Concentration at the step midpoints `(k + 1/2) dt`, `k = 0..steps`.
///
/// When `T / dt` is an integer the kernel is tabulated once and the
/// superposition becomes an exact discrete convolution; otherwise each
/// point is summed directly.
pub fn concentration_profile(
    params: &ChannelParams,
    inputs: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    validate_inputs(inputs)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::validation(format!("dt must be > 0, got {dt}")));
    }
    let h = ImpulseResponse::new(params)?;
    let n_max = f64::from(params.n_max);
    let period = params.symbol_duration;
    let ratio = period / dt;
    let per_symbol = ratio.round();

    let mut out = vec![0.0; steps];
    if per_symbol >= 1.0 && (ratio - per_symbol).abs() <= 1e-9 * ratio {
        let per_symbol = per_symbol as usize;
        let kernel: Vec<f64> = (0..steps).map(|i| h.at((i as f64 + 0.5) * dt)).collect();
        let releases: Vec<f64> = inputs.iter().map(|u| u * n_max).collect();
        for (k, c) in out.iter_mut().enumerate() {
            let last = (k / per_symbol).min(releases.len() - 1);
            let mut acc = 0.0;
            for (n, &q) in releases[..=last].iter().enumerate() {
                acc += q * kernel[k - n * per_symbol];
            }
            *c = acc;
        }
    } else {
        for (k, c) in out.iter_mut().enumerate() {
            let t = (k as f64 + 0.5) * dt;
            let mut acc = 0.0;
            for (n, &u) in inputs.iter().enumerate() {
                let release = n as f64 * period;
                if release > t {
                    break;
                }
                acc += u * n_max * h.at(t - release);
            }
            *c = acc;
        }
    }
    Ok(out)
}
