//! Gaussian-process Bayesian optimization.
//!
//! The surrogate works in the unit hypercube; [`SearchSpace`] maps between
//! natural parameter values and unit coordinates (log-scaled where the
//! physical range spans decades). Candidates are scored by expected
//! improvement for minimization.

mod acquisition;
mod gp;
mod optimize;
mod qmc;
mod space;

pub use acquisition::{expected_improvement, propose_next, Proposal, ProposeOptions};
pub use gp::{gp_fit, GpFitOptions, GpHyper, GpModel};
pub use optimize::{incumbent_trace, optimize, OptimizeOptions, Trial, TrialSource, TrialStatus};
pub use qmc::Halton;
pub use space::{Dimension, Scale, SearchSpace};
