use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::acquisition::{propose_next, ProposeOptions};
use super::gp::{gp_fit, GpFitOptions, GpHyper};
use super::qmc::Halton;
use super::space::SearchSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// How a trial's point was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSource {
    Initial,
    ExpectedImprovement,
    Exploration,
    /// Surrogate fit failed; a quasi-random point was used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    /// Natural coordinates in the order of the search space dimensions.
    pub point: Vec<f64>,
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub duration_s: f64,
    pub source: TrialSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trial {
    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub budget: usize,
    pub init: usize,
    pub seed: u64,
    pub gp: GpFitOptions,
    pub propose: ProposeOptions,
    /// Full multi-start hyperparameter fits happen every `refit_every`
    /// BO iterations; in between, a single local search starts from the
    /// previous hyperparameters.
    pub refit_every: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            budget: 200,
            init: 20,
            seed: 0,
            gp: GpFitOptions::default(),
            propose: ProposeOptions::default(),
            refit_every: 10,
        }
    }
}

fn evaluate<F>(objective: &F, index: usize, point: Vec<f64>, source: TrialSource) -> Trial
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let start = Instant::now();
    let outcome = objective(&point);
    let duration_s = start.elapsed().as_secs_f64();
    let (objective, status, error) = match outcome {
        Ok(v) if v.is_finite() => (Some(v), TrialStatus::Ok, None),
        Ok(v) => (
            None,
            TrialStatus::Failed,
            Some(format!("non-finite objective {v}")),
        ),
        Err(e) => (None, TrialStatus::Failed, Some(e.to_string())),
    };
    Trial {
        index,
        point,
        objective,
        status,
        duration_s,
        source,
        error,
    }
}

/// Sequential GP-EI minimization of `objective` over `space`.
///
/// The first `init` points come from a shifted Halton design and are
/// evaluated in parallel. Each later trial conditions on every earlier
/// one; failed trials enter the surrogate at the worst observed value.
/// `observer` sees trials in evaluation order. The returned list is
/// sorted ascending by objective with failures last.
pub fn optimize<F, O>(
    objective: F,
    space: &SearchSpace,
    opts: &OptimizeOptions,
    mut observer: O,
) -> Result<Vec<Trial>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    O: FnMut(&Trial) -> Result<()>,
{
    space.validate()?;
    if opts.init < 2 || opts.budget < opts.init {
        return Err(Error::validation(format!(
            "need budget >= init >= 2, got budget {} and init {}",
            opts.budget, opts.init
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut halton = Halton::new(space.len(), &mut rng);

    let design: Vec<Vec<f64>> = halton
        .take_points(opts.init)
        .iter()
        .map(|z| space.from_unit(z))
        .collect();
    let mut trials: Vec<Trial> = design
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| evaluate(&objective, i, p, TrialSource::Initial))
        .collect();
    for t in &trials {
        observer(t)?;
    }
    if trials.iter().all(|t| !t.is_ok()) {
        let first = trials[0].error.clone().unwrap_or_default();
        return Err(Error::Numerical(format!(
            "objective failed on all {} initial points; first error: {first}",
            trials.len()
        )));
    }

    let mut warm: Option<GpHyper> = None;
    while trials.len() < opts.budget {
        let index = trials.len();
        let worst = trials
            .iter()
            .filter_map(|t| t.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let f_min = trials
            .iter()
            .filter_map(|t| t.objective)
            .fold(f64::INFINITY, f64::min);
        let xs: Vec<Vec<f64>> = trials.iter().map(|t| space.to_unit(&t.point)).collect();
        let ys: Vec<f64> = trials
            .iter()
            .map(|t| t.objective.unwrap_or(worst))
            .collect();
        let full = warm.is_none() || (index - opts.init).is_multiple_of(opts.refit_every.max(1));
        let gp_opts = GpFitOptions {
            seed: opts.gp.seed ^ opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64,
            warm_start: warm.clone(),
            restarts: if full { opts.gp.restarts } else { 1 },
            ..opts.gp.clone()
        };
        let (point, source) = match gp_fit(&xs, &ys, &gp_opts) {
            Ok(model) => {
                warm = Some(model.hyper().clone());
                let p = propose_next(&model, space, f_min, &mut rng, &opts.propose);
                let source = if p.exploration {
                    TrialSource::Exploration
                } else {
                    TrialSource::ExpectedImprovement
                };
                (p.point, source)
            }
            Err(_) => (space.from_unit(&halton.next_point()), TrialSource::Fallback),
        };
        let trial = evaluate(&objective, index, point, source);
        observer(&trial)?;
        trials.push(trial);
    }

    trials.sort_by(|a, b| match (a.objective, b.objective) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    Ok(trials)
}

/// Running best objective in evaluation order (failures carry the
/// previous value; leading failures are `None`).
pub fn incumbent_trace(trials: &[Trial]) -> Vec<Option<f64>> {
    let mut ordered: Vec<&Trial> = trials.iter().collect();
    ordered.sort_by_key(|t| t.index);
    let mut best: Option<f64> = None;
    ordered
        .into_iter()
        .map(|t| {
            if let Some(v) = t.objective {
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
            best
        })
        .collect()
}
