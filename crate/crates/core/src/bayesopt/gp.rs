//! Gaussian-process regression with an ARD Matérn-5/2 kernel.
//!
//! Observations are standardized to zero mean and unit variance; the
//! signal variance, per-dimension lengthscales and noise variance are
//! fitted by maximizing the log marginal likelihood with a multi-start
//! quasi-Newton search in log-hyperparameter space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

// Box for the log-hyperparameters (standardized units).
const SIGNAL_BOUNDS: (f64, f64) = (1e-2, 1e2);
const LENGTH_BOUNDS: (f64, f64) = (1e-2, 5e1);
const NOISE_BOUNDS: (f64, f64) = (1e-8, 1.0);

/// Kernel hyperparameters, on the standardized output scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub signal_var: f64,
    pub lengthscales: Vec<f64>,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_var: f64, noise_var: f64) -> Self {
        Self {
            signal_var,
            lengthscales: vec![lengthscale; dim],
            noise_var,
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.lengthscales.len() + 2);
        v.push(self.signal_var.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            signal_var: theta[0].exp(),
            lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
            noise_var: theta[d + 1].exp(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = self.signal_var > 0.0
            && self.noise_var >= 0.0
            && self.lengthscales.len() == dim
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Surrogate(format!(
                "invalid GP hyperparameters {self:?}"
            )))
        }
    }
}

fn log_bounds(dim: usize) -> Vec<(f64, f64)> {
    let ln = |(a, b): (f64, f64)| (f64::ln(a), f64::ln(b));
    let mut v = vec![ln(SIGNAL_BOUNDS)];
    v.extend(std::iter::repeat_n(ln(LENGTH_BOUNDS), dim));
    v.push(ln(NOISE_BOUNDS));
    v
}

#[inline]
fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let z = (x - y) / l;
            z * z
        })
        .sum()
}

#[inline]
fn matern52(r2: f64, signal_var: f64) -> f64 {
    let r = r2.sqrt();
    signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

fn kernel_matrix(x: &[Vec<f64>], hyper: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hyper.signal_var;
        for j in 0..i {
            let v = matern52(
                scaled_sq_dist(&x[i], &x[j], &hyper.lengthscales),
                hyper.signal_var,
            );
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `K + (noise + jitter) I`, escalating the jitter tenfold
/// from 1e-8 up to 1e-4.
fn factorize(k: &DMatrix<f64>, noise: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += noise + jitter;
        }
        if let Some(chol) = a.cholesky() {
            return Some((chol, jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// Log marginal likelihood and its gradient w.r.t. the log-hyperparameters.
fn lml_and_grad(x: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let hyper = GpHyper::from_log(theta);
    let n = x.len();
    let dim = hyper.lengthscales.len();
    let k = kernel_matrix(x, &hyper);
    let (chol, _) = factorize(&k, hyper.noise_var)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol
        .l_dirty()
        .diagonal()
        .iter()
        .take(n)
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    if !lml.is_finite() {
        return None;
    }
    let k_inv = chol.inverse();
    // W = alpha alpha^T - K^{-1}; dL/dtheta = 0.5 tr(W dK/dtheta)
    let mut w = &alpha * alpha.transpose();
    w -= &k_inv;

    let mut grad = vec![0.0; dim + 2];
    let inv_l2: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    for i in 0..n {
        // diagonal: dK_ii/dlog s2 = s2, lengthscale terms vanish
        grad[0] += 0.5 * w[(i, i)] * hyper.signal_var;
        for j in 0..i {
            let r2 = scaled_sq_dist(&x[i], &x[j], &hyper.lengthscales);
            let r = r2.sqrt();
            let e = (-SQRT5 * r).exp();
            let kij = hyper.signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * e;
            let wij = w[(i, j)]; // symmetric, counted twice
            grad[0] += wij * kij;
            let common = hyper.signal_var * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
            for d in 0..dim {
                let delta = x[i][d] - x[j][d];
                grad[1 + d] += wij * common * delta * delta * inv_l2[d];
            }
        }
    }
    grad[dim + 1] = 0.5 * hyper.noise_var * w.diagonal().sum();
    Some((lml, grad))
}

/// Log marginal likelihood of standardized observations, `None` if the
/// kernel matrix cannot be factorized.
pub(crate) fn log_marginal_likelihood(
    x: &[Vec<f64>],
    y_std: &[f64],
    hyper: &GpHyper,
) -> Option<f64> {
    let y = DVector::from_column_slice(y_std);
    lml_and_grad(x, &y, &hyper.to_log()).map(|(l, _)| l)
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(*lo, *hi);
    }
}

/// Projected BFGS ascent on the log marginal likelihood.
fn maximize_lml(
    x: &[Vec<f64>],
    y: &DVector<f64>,
    start: Vec<f64>,
    bounds: &[(f64, f64)],
    max_iters: usize,
) -> Option<(f64, Vec<f64>)> {
    let m = start.len();
    let mut theta = start;
    project(&mut theta, bounds);
    let (mut f, mut g) = lml_and_grad(x, y, &theta)?;
    let mut h_inv = DMatrix::<f64>::identity(m, m);
    for _ in 0..max_iters {
        let gv = DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = (&h_inv * &gv).iter().copied().collect();
        let blocked = |i: usize, d: f64, theta: &[f64]| {
            (theta[i] <= bounds[i].0 && d < 0.0) || (theta[i] >= bounds[i].1 && d > 0.0)
        };
        for (i, d) in dir.iter_mut().enumerate() {
            if blocked(i, *d, &theta) {
                *d = 0.0;
            }
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if !(slope > 0.0) {
            h_inv = DMatrix::identity(m, m);
            dir = g.clone();
            for (i, d) in dir.iter_mut().enumerate() {
                if blocked(i, *d, &theta) {
                    *d = 0.0;
                }
            }
            slope = dir.iter().map(|d| d * d).sum();
            if !(slope > 1e-12) {
                break;
            }
        }
        // keep the first trial step inside a sane region of log space
        let max_abs = dir.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let mut step = if max_abs > 3.0 { 3.0 / max_abs } else { 1.0 };
        let mut accepted = None;
        for _ in 0..25 {
            let mut trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            project(&mut trial, bounds);
            if let Some((fn_, gn)) = lml_and_grad(x, y, &trial) {
                let moved: f64 = trial
                    .iter()
                    .zip(&theta)
                    .zip(&g)
                    .map(|((a, b), g)| (a - b) * g)
                    .sum();
                if fn_ >= f + 1e-4 * moved.max(0.0) && fn_ > f - 1e-12 {
                    accepted = Some((trial, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, fn_, gn)) = accepted else {
            break;
        };
        let s = DVector::from_iterator(m, next.iter().zip(&theta).map(|(a, b)| a - b));
        // minimization convention: gradient of -lml
        let yk = DVector::from_iterator(m, g.iter().zip(&gn).map(|(a, b)| a - b));
        let sy = s.dot(&yk);
        let converged = (fn_ - f).abs() < 1e-9 * (1.0 + f.abs()) || s.amax() < 1e-8;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(m, m);
            let a = &i - rho * &s * yk.transpose();
            let b = &i - rho * &yk * s.transpose();
            h_inv = &a * &h_inv * &b + rho * &s * s.transpose();
        }
        theta = next;
        f = fn_;
        g = gn;
        if converged {
            break;
        }
    }
    Some((f, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Hyperparameters to use as the first start (e.g. the previous fit).
    pub warm_start: Option<GpHyper>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 60,
            seed: 0,
            warm_start: None,
        }
    }
}

/// Fitted Gaussian process; predictions are on the original output scale.
#[derive(Debug, Clone)]
pub struct GpModel {
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyper,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Condition a GP with fixed hyperparameters on the data.
    pub fn new(points: &[Vec<f64>], values: &[f64], hyper: GpHyper) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::Surrogate(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Surrogate("points differ in dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Surrogate("observed values must be finite".into()));
        }
        hyper.validate(dim)?;
        let (y_mean, y_scale, y_std) = standardize(values);
        let k = kernel_matrix(points, &hyper);
        let (chol, jitter) = factorize(&k, hyper.noise_var).ok_or_else(|| {
            Error::Surrogate("kernel matrix not positive definite at the maximum jitter".into())
        })?;
        let alpha = chol.solve(&DVector::from_vec(y_std));
        Ok(Self {
            train_x: points.to_vec(),
            train_y: values.to_vec(),
            y_mean,
            y_scale,
            hyper,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn dim(&self) -> usize {
        self.hyper.lengthscales.len()
    }

    /// Log marginal likelihood of the standardized data under the
    /// model's hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let (_, _, y) = standardize(&self.train_y);
        log_marginal_likelihood(&self.train_x, &y, &self.hyper).unwrap_or(f64::NEG_INFINITY)
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.train_x.len();
        let kstar = DVector::from_iterator(
            n,
            self.train_x.iter().map(|t| {
                matern52(
                    scaled_sq_dist(x, t, &self.hyper.lengthscales),
                    self.hyper.signal_var,
                )
            }),
        );
        let mean = kstar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .unwrap_or_else(|| DVector::zeros(n));
        let var = (self.hyper.signal_var - v.norm_squared()).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

fn standardize(values: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (
        mean,
        scale,
        values.iter().map(|v| (v - mean) / scale).collect(),
    )
}

/// Fit hyperparameters by multi-start maximization of the log marginal
/// likelihood and condition on the data.
pub fn gp_fit(points: &[Vec<f64>], values: &[f64], opts: &GpFitOptions) -> Result<GpModel> {
    if points.len() < 2 {
        return Err(Error::Surrogate(format!(
            "need at least 2 observations, got {}",
            points.len()
        )));
    }
    if points.len() != values.len() {
        return Err(Error::Surrogate(
            "points and values differ in length".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Surrogate("observed values must be finite".into()));
    }
    let dim = points[0].len();
    let bounds = log_bounds(dim);
    let (_, _, y_std) = standardize(values);
    let y = DVector::from_vec(y_std);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.restarts.max(1));
    starts.push(match &opts.warm_start {
        Some(h) if h.lengthscales.len() == dim => h.to_log(),
        _ => GpHyper::isotropic(dim, 0.5, 1.0, 1e-3).to_log(),
    });
    while starts.len() < opts.restarts.max(1) {
        let mut theta = Vec::with_capacity(dim + 2);
        theta.push(rng.random_range(0.1f64.ln()..10f64.ln()));
        for _ in 0..dim {
            theta.push(rng.random_range(0.05f64.ln()..5f64.ln()));
        }
        theta.push(rng.random_range(1e-6f64.ln()..1e-1f64.ln()));
        starts.push(theta);
    }

    let fits: Vec<Option<(f64, Vec<f64>)>> = starts
        .into_par_iter()
        .map(|start| maximize_lml(points, &y, start, &bounds, opts.max_iters))
        .collect();
    // first-best in start order keeps the result independent of scheduling
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (f, theta) in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, theta));
        }
    }
    let (_, theta) = best.ok_or_else(|| {
        Error::Surrogate("no hyperparameter start produced a factorizable kernel".into())
    })?;
    GpModel::new(points, values, GpHyper::from_log(&theta))
}
