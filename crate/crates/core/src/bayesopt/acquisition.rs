use rand::Rng;
use statrs::function::erf::erfc;

use super::gp::GpModel;
use super::qmc::Halton;
use super::space::SearchSpace;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Expected improvement below `f_min` of a Gaussian with the given mean
/// and standard deviation.
pub fn expected_improvement(mean: f64, std: f64, f_min: f64) -> f64 {
    let gain = f_min - mean;
    if std <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / std;
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let pdf = INV_SQRT_2PI * (-0.5 * z * z).exp();
    (gain * cdf + std * pdf).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposeOptions {
    pub candidates: usize,
    pub refine: usize,
    pub refine_steps: usize,
    pub initial_step: f64,
}

impl Default for ProposeOptions {
    fn default() -> Self {
        Self {
            candidates: 4096,
            refine: 8,
            refine_steps: 32,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// Natural coordinates, integer dimensions rounded.
    pub point: Vec<f64>,
    pub unit: Vec<f64>,
    pub ei: f64,
    /// True when every candidate had zero EI and the most uncertain one
    /// was taken instead.
    pub exploration: bool,
}

/// Snap a unit point onto the grid of representable natural points.
fn snap(space: &SearchSpace, z: &[f64]) -> Vec<f64> {
    space.to_unit(&space.from_unit(z))
}

/// Maximize EI over the space: score a shifted Halton design, then
/// polish the best few by coordinate search with a shrinking step.
pub fn propose_next<R: Rng>(
    model: &GpModel,
    space: &SearchSpace,
    f_min: f64,
    rng: &mut R,
    opts: &ProposeOptions,
) -> Proposal {
    let dim = space.len();
    let mut halton = Halton::new(dim, rng);
    let score = |z: &[f64]| {
        let (m, s) = model.predict(z);
        (expected_improvement(m, s, f_min), s)
    };

    let mut scored: Vec<(f64, f64, Vec<f64>)> = (0..opts.candidates.max(1))
        .map(|_| {
            let z = snap(space, &halton.next_point());
            let (ei, s) = score(&z);
            (ei, s, z)
        })
        .collect();

    let best_ei = scored.iter().map(|c| c.0).fold(0.0f64, f64::max);
    if !(best_ei > 0.0) {
        let (_, _, z) = scored
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("at least one candidate");
        return Proposal {
            point: space.from_unit(&z),
            unit: z,
            ei: 0.0,
            exploration: true,
        };
    }

    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut winner = (scored[0].0, scored[0].2.clone());
    for (ei0, _, z0) in scored.into_iter().take(opts.refine) {
        let mut z = z0;
        let mut ei = ei0;
        let mut step = opts.initial_step;
        for _ in 0..opts.refine_steps {
            let mut improved = false;
            for d in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut trial = z.clone();
                    trial[d] = (trial[d] + sign * step).clamp(0.0, 1.0);
                    let trial = snap(space, &trial);
                    if trial == z {
                        continue;
                    }
                    let (e, _) = score(&trial);
                    if e > ei {
                        ei = e;
                        z = trial;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if ei > winner.0 {
            winner = (ei, z);
        }
    }
    Proposal {
        point: space.from_unit(&winner.1),
        unit: winner.1,
        ei: winner.0,
        exploration: false,
    }
}

#[cfg(test)]
mod tests {
    use super::super::gp::{gp_fit, GpFitOptions, GpHyper};
    use super::super::space::{Dimension, Scale};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_case() {
        let ei = expected_improvement(0.5, 0.2, 0.5);
        assert!((ei - 0.2 * INV_SQRT_2PI).abs() < 1e-15);
        assert!((ei - 0.079_788).abs() < 1e-6);
    }

    #[test]
    fn degenerate_std() {
        assert_eq!(expected_improvement(0.7, 0.0, 0.5), 0.0);
        assert_eq!(expected_improvement(0.7, 1e-13, 0.5), 0.0);
        assert!((expected_improvement(0.3, 0.0, 0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn decreasing_in_mean_and_vanishing() {
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let mu = -2.0 + 0.02 * k as f64;
            let ei = expected_improvement(mu, 0.3, 0.0);
            assert!(ei < prev);
            prev = ei;
        }
        assert!(expected_improvement(50.0, 0.3, 0.0) < 1e-300);
    }

    fn unit_space(dim: usize) -> SearchSpace {
        SearchSpace::new(
            (0..dim)
                .map(|i| Dimension::new(&format!("x{i}"), 0.0, 1.0, Scale::Linear, false))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn flat_posterior_explores_away_from_data() {
        let space = unit_space(2);
        let hyper = GpHyper::isotropic(2, 1e3, 1.0, 1e-6);
        let model = GpModel::new(&[vec![0.2, 0.2]], &[1.0], hyper).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // the only observation is the incumbent and the posterior is flat,
        // so no candidate promises improvement
        let p = propose_next(&model, &space, 0.5, &mut rng, &ProposeOptions::default());
        assert!(p.exploration);
        let dist = ((p.unit[0] - 0.2).powi(2) + (p.unit[1] - 0.2).powi(2)).sqrt();
        assert!(dist > 0.8, "{dist}");
    }

    #[test]
    fn quadratic_minimum_located() {
        let space = unit_space(1);
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64 + 0.5) / 10.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] - 0.37).powi(2)).collect();
        let model = gp_fit(&xs, &ys, &GpFitOptions::default()).unwrap();
        let f_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = propose_next(&model, &space, f_min, &mut rng, &ProposeOptions::default());
        assert!((p.point[0] - 0.37).abs() < 0.1, "{:?}", p.point);
    }

    #[test]
    fn scale_invariant_choice() {
        let space = unit_space(2);
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                vec![
                    (i as f64 * 0.618_034).fract(),
                    (i as f64 * 0.414_214).fract(),
                ]
            })
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| (x[0] - 0.6).powi(2) + (x[1] - 0.2).powi(2))
            .collect();
        let hyper = GpHyper::isotropic(2, 0.3, 1.0, 1e-6);
        let a = GpModel::new(&xs, &ys, hyper.clone()).unwrap();
        let scaled: Vec<f64> = ys.iter().map(|y| y * 4.0).collect();
        let b = GpModel::new(&xs, &scaled, hyper).unwrap();
        let fa = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let opts = ProposeOptions::default();
        let pa = propose_next(&a, &space, fa, &mut ChaCha8Rng::seed_from_u64(5), &opts);
        let pb = propose_next(
            &b,
            &space,
            fa * 4.0,
            &mut ChaCha8Rng::seed_from_u64(5),
            &opts,
        );
        assert_eq!(pa.unit, pb.unit);
    }
}
