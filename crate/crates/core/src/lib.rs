#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! A molecular communication channel used as a tunable physical reservoir
//! computer.
//!
//! A point transmitter encodes each input symbol `u(n)` in the number of
//! molecules it releases; the molecules diffuse to a spherical receiver
//! whose receptor occupancy `b(t)` is the reservoir output. Sampling `b(t)`
//! at several offsets per symbol gives the state vector and a linear
//! readout is trained on top. Gaussian-process Bayesian optimization
//! searches the biophysical parameters for task-specific regimes.
//!
//! Modules, bottom up:
//!
//! * [`channel`] diffusive impulse response and receiver concentration
//! * [`receptor`] mean-field binding kinetics, the `b(t)` trace
//! * [`stochastic`] particle-based Brownian channel
//! * [`reservoir`] virtual nodes, filtering, readout training
//! * [`tasks`] benchmark series and the NRMSE metric
//! * [`bayesopt`] GP surrogate, expected improvement, optimization loop
//! * [`experiment`] end-to-end pipelines, studies and artifacts

pub mod bayesopt;
pub mod channel;
pub mod error;
pub mod experiment;
mod num;
pub mod params;
pub mod receptor;
pub mod reservoir;
pub mod stochastic;
pub mod tasks;

pub use error::{Error, Result};
pub use params::ChannelParams;
pub use receptor::BoundFractionTrace;
pub use reservoir::{ReadoutWeights, ReservoirConfig, ReservoirDataset};
pub use stochastic::StochasticConfig;
pub use tasks::{TaskKind, TaskSeries};
