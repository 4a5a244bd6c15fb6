use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ChannelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    #[serde(default)]
    pub integer: bool,
}

impl Dimension {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale, integer: bool) -> Self {
        Self {
            name: name.to_owned(),
            lower,
            upper,
            scale,
            integer,
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        let z = match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Log10 => {
                (v.log10() - self.lower.log10()) / (self.upper.log10() - self.lower.log10())
            }
        };
        z.clamp(0.0, 1.0)
    }

    fn value_at(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lower + z * (self.upper - self.lower),
            Scale::Log10 => {
                let (a, b) = (self.lower.log10(), self.upper.log10());
                10f64.powf(a + z * (b - a))
            }
        };
        if self.integer {
            v.round().clamp(self.lower.ceil(), self.upper.floor())
        } else {
            v.clamp(self.lower, self.upper)
        }
    }
}

/// Box-bounded search space with per-dimension scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let space = Self { dims };
        space.validate()?;
        Ok(space)
    }

    /// Default bounds for the channel parameters, in the order
    /// k_on, k_off, T, d, n_max, D, memory window.
    pub fn channel() -> Self {
        Self {
            dims: vec![
                Dimension::new("k_on", 1e-19, 1e-16, Scale::Log10, false),
                Dimension::new("k_off", 1.0, 10.0, Scale::Linear, false),
                Dimension::new("symbol_duration", 0.5, 2.5, Scale::Linear, false),
                Dimension::new("distance", 2e-6, 8e-6, Scale::Linear, false),
                Dimension::new("n_max", 1e3, 2e4, Scale::Log10, true),
                Dimension::new("diffusion", 1e-12, 1e-9, Scale::Log10, false),
                Dimension::new("memory_window", 1.0, 10.0, Scale::Linear, true),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::validation("search space has no dimensions"));
        }
        for d in &self.dims {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(Error::validation(format!(
                    "dimension {} needs lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.scale == Scale::Log10 && d.lower <= 0.0 {
                return Err(Error::validation(format!(
                    "log-scaled dimension {} needs a positive lower bound",
                    d.name
                )));
            }
            if d.integer && d.lower.ceil() > d.upper.floor() {
                return Err(Error::validation(format!(
                    "integer dimension {} contains no integer",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn to_unit(&self, point: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(point)
            .map(|(d, &v)| d.to_unit(v))
            .collect()
    }

    /// Natural values, rounded on integer dimensions and clamped to bounds.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(unit)
            .map(|(d, &z)| d.value_at(z))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.len()
            && self
                .dims
                .iter()
                .zip(point)
                .all(|(d, &v)| v >= d.lower && v <= d.upper && (!d.integer || v.fract() == 0.0))
    }

    /// Interpret a natural point of [`SearchSpace::channel`] layout.
    pub fn channel_params(&self, point: &[f64]) -> Result<ChannelParams> {
        let get = |name: &str| {
            self.dims
                .iter()
                .position(|d| d.name == name)
                .map(|i| point[i])
                .ok_or_else(|| Error::validation(format!("search space lacks dimension {name}")))
        };
        let params = ChannelParams {
            k_on: get("k_on")?,
            k_off: get("k_off")?,
            symbol_duration: get("symbol_duration")?,
            distance: get("distance")?,
            n_max: get("n_max")?.round() as u32,
            diffusion: get("diffusion")?,
            memory_window: get("memory_window")?.round() as usize,
        };
        params.validate()?;
        Ok(params)
    }

    /// Inverse of [`SearchSpace::channel_params`].
    pub fn channel_point(&self, params: &ChannelParams) -> Result<Vec<f64>> {
        self.dims
            .iter()
            .map(|d| match d.name.as_str() {
                "k_on" => Ok(params.k_on),
                "k_off" => Ok(params.k_off),
                "symbol_duration" => Ok(params.symbol_duration),
                "distance" => Ok(params.distance),
                "n_max" => Ok(f64::from(params.n_max)),
                "diffusion" => Ok(params.diffusion),
                "memory_window" => Ok(params.memory_window as f64),
                other => Err(Error::validation(format!(
                    "unknown channel dimension {other}"
                ))),
            })
            .collect()
    }
}
