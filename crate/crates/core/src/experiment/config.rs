use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayesopt::SearchSpace;
use crate::error::{Error, Result};
use crate::params::ChannelParams;
use crate::reservoir::ReservoirConfig;
use crate::stochastic::StochasticConfig;
use crate::tasks::{self, TaskKind, TaskSeries};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Evaluate,
    Optimize,
    Crisscross,
    StochasticCompare,
    FilterSweep,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Evaluate => "evaluate",
            Mode::Optimize => "optimize",
            Mode::Crisscross => "crisscross",
            Mode::StochasticCompare => "stochastic_compare",
            Mode::FilterSweep => "filter_sweep",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Deterministic,
    Stochastic,
}

/// Channel parameters as written in configuration files: identical to
/// [`ChannelParams`] except that the distance is in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub k_on: f64,
    pub k_off: f64,
    pub symbol_duration: f64,
    pub distance_um: f64,
    pub n_max: u32,
    pub diffusion: f64,
    pub memory_window: usize,
}

impl From<ChannelParams> for ChannelSpec {
    fn from(p: ChannelParams) -> Self {
        Self {
            k_on: p.k_on,
            k_off: p.k_off,
            symbol_duration: p.symbol_duration,
            distance_um: p.distance * 1e6,
            n_max: p.n_max,
            diffusion: p.diffusion,
            memory_window: p.memory_window,
        }
    }
}

impl ChannelSpec {
    pub fn to_params(&self) -> Result<ChannelParams> {
        let p = ChannelParams {
            k_on: self.k_on,
            k_off: self.k_off,
            symbol_duration: self.symbol_duration,
            distance: self.distance_um * 1e-6,
            n_max: self.n_max,
            diffusion: self.diffusion,
            memory_window: self.memory_window,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Prediction horizon in symbols; defaults to 6 for forecasting and 10
    /// for the cubed task. Ignored by sine-to-square.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_symbols")]
    pub num_symbols: usize,
    #[serde(default = "default_period")]
    pub sine_period: usize,
    /// Seed of the Mackey-Glass history perturbation.
    #[serde(default = "default_mg_seed")]
    pub mg_seed: u64,
    /// Read inputs and targets from an `n,u,y` CSV instead of generating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_csv: Option<PathBuf>,
}

fn default_symbols() -> usize {
    1800
}

fn default_period() -> usize {
    20
}

fn default_mg_seed() -> u64 {
    1
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            horizon: None,
            num_symbols: default_symbols(),
            sine_period: default_period(),
            mg_seed: default_mg_seed(),
            series_csv: None,
        }
    }

    pub fn horizon(&self) -> usize {
        match self.kind {
            TaskKind::ForecastMg => self.horizon.unwrap_or(6),
            TaskKind::MgCubed => self.horizon.unwrap_or(10),
            TaskKind::SineToSquare => 0,
        }
    }

    /// Generate (or load) the series. Relative CSV paths resolve against
    /// `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<TaskSeries> {
        if let Some(csv) = &self.series_csv {
            let path = match base {
                Some(b) if csv.is_relative() => b.join(csv),
                _ => csv.clone(),
            };
            return Ok(
                TaskSeries::read_csv(&path, self.kind, self.horizon())?.truncated(self.num_symbols)
            );
        }
        match self.kind {
            TaskKind::SineToSquare => {
                tasks::make_sine_to_square(self.num_symbols, self.sine_period)
            }
            TaskKind::ForecastMg | TaskKind::MgCubed => {
                let p = self.horizon();
                let raw =
                    tasks::MackeyGlass::default().generate(self.num_symbols + p, self.mg_seed)?;
                if self.kind == TaskKind::ForecastMg {
                    tasks::make_forecast_task(&raw, p)
                } else {
                    tasks::make_mg_cubed_task(&raw, p)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_init")]
    pub init: usize,
    #[serde(default = "default_restarts")]
    pub gp_restarts: usize,
    /// Defaults to the seven-dimensional channel space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
}

fn default_budget() -> usize {
    200
}

fn default_init() -> usize {
    20
}

fn default_restarts() -> usize {
    8
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            init: default_init(),
            gp_restarts: default_restarts(),
            space: None,
        }
    }
}

impl OptimizeSpec {
    pub fn search_space(&self) -> SearchSpace {
        self.space.clone().unwrap_or_else(SearchSpace::channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedChannel {
    pub name: String,
    pub channel: ChannelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrisscrossSpec {
    /// Matrix rows.
    pub sets: Vec<NamedChannel>,
    /// Matrix columns; defaults to the three benchmark tasks.
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskSpec>,
}

fn default_tasks() -> Vec<TaskSpec> {
    TaskKind::ALL.iter().map(|k| TaskSpec::new(*k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSweepSpec {
    /// Moving-average windows in trace samples; the unfiltered baseline
    /// is always included.
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
}

pub(crate) fn default_windows() -> Vec<usize> {
    vec![500, 1000, 2000, 4000, 8000]
}

impl Default for FilterSweepSpec {
    fn default() -> Self {
        Self {
            windows: default_windows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticCompareSpec {
    /// Window applied to the averaged stochastic trace.
    #[serde(default = "default_compare_window")]
    pub filter_window: usize,
}

fn default_compare_window() -> usize {
    2000
}

impl Default for StochasticCompareSpec {
    fn default() -> Self {
        Self {
            filter_window: default_compare_window(),
        }
    }
}

/// One experiment, as stored in a JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Must agree with the CLI subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub reservoir: ReservoirConfig,
    #[serde(default)]
    pub stochastic: StochasticConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crisscross: Option<CrisscrossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_sweep: Option<FilterSweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic_compare: Option<StochasticCompareSpec>,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mode: Some(mode),
            rng_seed: 0,
            task: None,
            channel: None,
            engine: EngineKind::default(),
            reservoir: ReservoirConfig::default(),
            stochastic: StochasticConfig::default(),
            optimize: None,
            crisscross: None,
            filter_sweep: None,
            stochastic_compare: None,
        }
    }

    /// Parse a configuration; errors carry the line and column.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                path: path.to_owned(),
                message: format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    cfg.schema_version
                ),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn require<'a, T>(&'a self, section: &'a Option<T>, name: &str, mode: Mode) -> Result<&'a T> {
        section.as_ref().ok_or_else(|| Error::Config {
            path: PathBuf::new(),
            message: format!("mode {mode} requires section `{name}`"),
        })
    }

    pub fn require_task(&self, mode: Mode) -> Result<&TaskSpec> {
        self.require(&self.task, "task", mode)
    }

    pub fn require_channel(&self, mode: Mode) -> Result<ChannelParams> {
        self.require(&self.channel, "channel", mode)?.to_params()
    }

    pub fn require_crisscross(&self, mode: Mode) -> Result<&CrisscrossSpec> {
        self.require(&self.crisscross, "crisscross", mode)
    }

    /// Check that every section `mode` needs is present and valid.
    pub fn validate_for(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config {
                    path: PathBuf::new(),
                    message: format!("config declares mode {m} but {mode} was requested"),
                });
            }
        }
        self.reservoir.validate()?;
        self.stochastic.validate()?;
        match mode {
            Mode::Evaluate | Mode::StochasticCompare | Mode::FilterSweep => {
                self.require_task(mode)?;
                self.require_channel(mode)?;
            }
            Mode::Optimize => {
                self.require_task(mode)?;
                let spec = self.optimize.clone().unwrap_or_default();
                spec.search_space().validate()?;
                if spec.init < 2 || spec.budget < spec.init {
                    return Err(Error::validation(format!(
                        "optimize needs budget >= init >= 2, got budget {} and init {}",
                        spec.budget, spec.init
                    )));
                }
            }
            Mode::Crisscross => {
                let cc = self.require_crisscross(mode)?;
                if cc.sets.is_empty() || cc.tasks.is_empty() {
                    return Err(Error::validation(
                        "crisscross needs at least one set and one task",
                    ));
                }
                for s in &cc.sets {
                    s.channel.to_params()?;
                }
            }
        }
        if mode == Mode::FilterSweep {
            let windows = &self.filter_sweep.clone().unwrap_or_default().windows;
            if windows.iter().any(|w| *w < 1) || windows.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::validation(format!(
                    "filter windows must be >= 1 and strictly ascending, got {windows:?}"
                )));
            }
        }
        Ok(())
    }
}
