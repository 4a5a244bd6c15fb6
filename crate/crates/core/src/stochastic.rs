//! Particle-based stochastic channel.
//!
//! Free ligands perform Brownian motion around a reflective spherical
//! receiver centred at the origin; the transmitter sits at `(d, 0, 0)`.
//! A thin sensing shell `R <= r <= R + delta` surrounds the receiver.
//! Every ligand found inside the shell at the end of a step may bind, with
//! per-step probability
//!
//! ```text
//! p_bind = 1 - exp(-k_on * N_free * dt / V_shell)
//! ```
//!
//! where `N_free` is the current number of unoccupied receptors, so the
//! expected binding flux is `k_on c N_free`, the same as the mean-field
//! `N_R k_on c (1 - b)`. Bound receptors release with probability
//! `1 - exp(-k_off dt)` and put the ligand back on the outer shell surface.
//!
//! [`step_particles`] advances every ligand by one fixed step. The
//! [`run_stochastic`] driver uses the same rules but only looks at a ligand
//! when it could have reached the shell. With `g` the gap to the shell and
//! `s = safety * sqrt(2 D dt)`:
//!
//! - `g < s`: moved every step;
//! - `s <= g < 1.5 s`: left alone for `k = floor((g / s)^2)` steps, then
//!   moved by the exact free displacement for `k dt`;
//! - otherwise: jumps to the surface of the ball of radius `a = g - s`
//!   around it after a first-passage time drawn from the exit law of a
//!   ball, then diffuses freely to the next step boundary.
//!
//! Pending ligands sit on a timing wheel keyed by the step they are due.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::validate_inputs;
use crate::error::{Error, Result};
use crate::params::ChannelParams;
use crate::receptor::BoundFractionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StochasticConfig {
    /// Receiver sphere radius, m.
    pub receiver_radius: f64,
    pub num_receptors: u32,
    /// Particle time step, s. Traces are recorded at this resolution.
    pub dt_sim: f64,
    pub rng_seed: u64,
    pub num_replicates: usize,
    /// Sensing-shell thickness as a fraction of the receiver radius.
    pub shell_fraction: f64,
    /// Remove ligands beyond this multiple of `d` from the receiver.
    pub removal_radius_factor: Option<f64>,
    /// Hard cap on particle updates per second of simulated time.
    pub work_cap: f64,
    /// Gap, in single-step standard deviations, a ligand must keep from
    /// the shell to be skipped.
    pub safety_sigmas: f64,
    /// Set to false to move every ligand on every step.
    pub skip_far_field: bool,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            receiver_radius: 0.5e-6,
            num_receptors: 1000,
            dt_sim: 1e-3,
            rng_seed: 0,
            num_replicates: 3,
            shell_fraction: 0.1,
            removal_radius_factor: None,
            work_cap: 5e6,
            safety_sigmas: 6.0,
            skip_far_field: true,
        }
    }
}

impl StochasticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.receiver_radius > 0.0) || !self.receiver_radius.is_finite() {
            return Err(Error::validation("receiver_radius must be > 0"));
        }
        if !(self.dt_sim > 0.0) || !self.dt_sim.is_finite() {
            return Err(Error::validation("dt_sim must be > 0"));
        }
        if self.num_receptors < 1 {
            return Err(Error::validation("num_receptors must be >= 1"));
        }
        if self.num_replicates < 1 {
            return Err(Error::validation("num_replicates must be >= 1"));
        }
        if !(self.shell_fraction > 0.0) {
            return Err(Error::validation("shell_fraction must be > 0"));
        }
        if !(self.work_cap > 0.0) {
            return Err(Error::validation("work_cap must be > 0"));
        }
        if !(self.safety_sigmas >= 1.0) {
            return Err(Error::validation("safety_sigmas must be >= 1"));
        }
        if let Some(f) = self.removal_radius_factor {
            if !(f > 1.0) {
                return Err(Error::validation("removal_radius_factor must be > 1"));
            }
        }
        Ok(())
    }

    pub fn shell_thickness(&self) -> f64 {
        self.receiver_radius * self.shell_fraction
    }

    pub fn outer_radius(&self) -> f64 {
        self.receiver_radius + self.shell_thickness()
    }

    pub fn shell_volume(&self) -> f64 {
        let (r, o) = (self.receiver_radius, self.outer_radius());
        4.0 / 3.0 * PI * (o * o * o - r * r * r)
    }
}

/// Free ligands plus receptor occupancy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleState {
    pub positions: Vec<[f64; 3]>,
    pub bound_count: u32,
    /// Ligands dropped by the far-field removal.
    pub removed: u64,
    pub time: f64,
}

impl ParticleState {
    /// Free + bound + removed; constant between releases.
    pub fn total(&self) -> u64 {
        self.positions.len() as u64 + u64::from(self.bound_count) + self.removed
    }
}

#[inline]
fn norm(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Mirror a point that ended inside the receiver back out through its
/// surface along the radial direction.
#[inline]
fn reflect<R: Rng>(p: &mut [f64; 3], radius: f64, rng: &mut R) {
    let r = norm(p);
    if r >= radius {
        return;
    }
    if r == 0.0 {
        let dir: [f64; 3] = UnitSphere.sample(rng);
        *p = dir.map(|c| c * radius);
        return;
    }
    let scale = (2.0 * radius - r) / r;
    for c in p.iter_mut() {
        *c *= scale;
    }
    // Guard the rounding of the scaled coordinates.
    if norm(p) < radius {
        let s = radius / norm(p);
        for c in p.iter_mut() {
            *c *= s;
        }
    }
}

#[inline]
fn displace<R: Rng>(p: &mut [f64; 3], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for c in p.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *c += sigma * z;
    }
}

fn shell_point<R: Rng>(cfg: &StochasticConfig, rng: &mut R) -> [f64; 3] {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    dir.map(|c| c * cfg.outer_radius())
}

/// Bind shuffled candidates while receptors are free; returns the
/// candidates that bound.
fn bind_candidates<R: Rng>(
    candidates: &mut [u32],
    bound: &mut u32,
    params: &ChannelParams,
    cfg: &StochasticConfig,
    rng: &mut R,
) -> Vec<u32> {
    candidates.shuffle(rng);
    let per_receptor = params.k_on * cfg.dt_sim / cfg.shell_volume();
    let mut taken = Vec::new();
    for &c in candidates.iter() {
        let free = cfg.num_receptors - *bound;
        if free == 0 {
            break;
        }
        let p = 1.0 - (-per_receptor * f64::from(free)).exp();
        if rng.random::<f64>() < p {
            *bound += 1;
            taken.push(c);
        }
    }
    taken
}

fn unbind_count<R: Rng>(
    bound: u32,
    params: &ChannelParams,
    cfg: &StochasticConfig,
    rng: &mut R,
) -> u32 {
    if bound == 0 {
        return 0;
    }
    let p = 1.0 - (-params.k_off * cfg.dt_sim).exp();
    if p <= 0.0 {
        return 0;
    }
    Binomial::new(u64::from(bound), p.min(1.0))
        .map(|b| b.sample(rng) as u32)
        .unwrap_or(0)
}

fn removal_radius(params: &ChannelParams, cfg: &StochasticConfig) -> f64 {
    cfg.removal_radius_factor
        .map_or(f64::INFINITY, |f| f * params.distance)
}

/// Advance every free ligand and the receptors by one `dt_sim`.
///
/// Allows `k_on = 0`, `k_off = 0` and `D = 0`, which the channel
/// parameter validation would reject, so frozen and absorbing limits can
/// be exercised directly.
pub fn step_particles<R: Rng>(
    state: &mut ParticleState,
    params: &ChannelParams,
    cfg: &StochasticConfig,
    rng: &mut R,
) {
    let total_before = state.total();
    let sigma = (2.0 * params.diffusion * cfg.dt_sim).sqrt();
    let inner = cfg.receiver_radius;
    let outer = cfg.outer_radius();
    let far = removal_radius(params, cfg);

    let mut keep = vec![true; state.positions.len()];
    let mut candidates = Vec::new();
    for (i, p) in state.positions.iter_mut().enumerate() {
        displace(p, sigma, rng);
        reflect(p, inner, rng);
        let r = norm(p);
        if r > far {
            keep[i] = false;
            state.removed += 1;
        } else if r <= outer {
            candidates.push(i as u32);
        }
    }
    if params.k_on > 0.0 {
        for i in bind_candidates(&mut candidates, &mut state.bound_count, params, cfg, rng) {
            keep[i as usize] = false;
        }
    }
    let mut idx = 0;
    state.positions.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    let released = unbind_count(state.bound_count, params, cfg, rng);
    state.bound_count -= released;
    for _ in 0..released {
        state.positions.push(shell_point(cfg, rng));
    }
    state.time += cfg.dt_sim;
    debug_assert_eq!(state.total(), total_before);
}

/// Insert `round(u n_max)` ligands at the transmitter.
pub fn release_pulse(state: &mut ParticleState, u: f64, params: &ChannelParams) -> Result<usize> {
    let count = pulse_size(u, params)?;
    state
        .positions
        .extend(std::iter::repeat_n([params.distance, 0.0, 0.0], count));
    Ok(count)
}

fn pulse_size(u: f64, params: &ChannelParams) -> Result<usize> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::validation(format!(
            "pulse amplitude {u} outside [0, 1]"
        )));
    }
    Ok((u * f64::from(params.n_max)).round() as usize)
}

/// Probability that Brownian motion started at the centre of a ball has
/// left it by reduced time `tau = D t / a^2`, and the density.
fn ball_exit_cdf(tau: f64) -> (f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0);
    }
    if tau < 0.25 {
        // image-series form, fast for short times
        let mut cdf = 0.0;
        let mut pdf = 0.0;
        for c in [0.25, 2.25, 6.25] {
            let e = (-c / tau).exp();
            cdf += e;
            pdf += e * (c / tau - 0.5);
        }
        let pre = 2.0 / (PI * tau).sqrt();
        (cdf * pre, pdf * pre / tau)
    } else {
        let mut surv = 0.0;
        let mut pdf = 0.0;
        for (n2, sign) in [(1.0, 1.0), (4.0, -1.0), (9.0, 1.0)] {
            let e = (-n2 * PI * PI * tau).exp();
            surv += sign * e;
            pdf += sign * n2 * e;
        }
        (1.0 - 2.0 * surv, 2.0 * PI * PI * pdf)
    }
}

const EXIT_TABLE: usize = 1024;

fn exit_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=EXIT_TABLE)
            .map(|i| match i {
                0 => 0.0,
                EXIT_TABLE => f64::INFINITY,
                _ => solve_exit_tau(i as f64 / EXIT_TABLE as f64, None),
            })
            .collect()
    })
}

/// Invert [`ball_exit_cdf`] by safeguarded Newton iteration.
fn solve_exit_tau(u: f64, guess: Option<f64>) -> f64 {
    let (mut lo, mut hi) = (1e-4, 60.0);
    let mut tau = guess.unwrap_or(if u > 0.5 {
        (2.0 / (1.0 - u)).ln() / (PI * PI)
    } else {
        0.25 / (1.0 / u.max(1e-300)).ln().max(1.0)
    });
    tau = tau.clamp(lo, hi);
    for _ in 0..100 {
        let (f, d) = ball_exit_cdf(tau);
        if f < u {
            lo = tau;
        } else {
            hi = tau;
        }
        let newton = tau - (f - u) / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        // quadratic convergence: the error in `next` is about the square
        // of this step
        if (next - tau).abs() <= 1e-7 * tau {
            return next;
        }
        tau = next;
    }
    tau
}

/// Reduced exit time for a uniform draw `u`.
fn ball_exit_tau(u: f64) -> f64 {
    let table = exit_table();
    let x = u * EXIT_TABLE as f64;
    let i = (x as usize).min(EXIT_TABLE - 1);
    let guess = if i == 0 || i == EXIT_TABLE - 1 {
        None
    } else {
        let w = x - i as f64;
        Some(table[i] + w * (table[i + 1] - table[i]))
    };
    solve_exit_tau(u, guess)
}

const WHEEL_BITS: u32 = 10;
const WHEEL_MASK: u64 = (1 << WHEEL_BITS) - 1;

/// Ligand store for the multi-rate driver. Slots are reused after binding
/// or removal so indices stay stable.
///
/// `pos[i]` is exact at step `clock[i]`. A ligand is due at some later
/// step; due steps in the current block of 1024 live on a wheel, later
/// ones in per-block lists that are spread onto the wheel when their
/// block starts.
struct Engine<'a> {
    params: &'a ChannelParams,
    cfg: &'a StochasticConfig,
    rng: ChaCha8Rng,
    pos: Vec<[f64; 3]>,
    clock: Vec<u64>,
    vacant: Vec<u32>,
    wheel: Vec<Vec<u32>>,
    later: HashMap<u64, Vec<(u64, u32)>>,
    bound: u32,
    free_count: u64,
    removed: u64,
    step: u64,
    updates: u64,
    sigma_step: f64,
}

impl<'a> Engine<'a> {
    fn new(params: &'a ChannelParams, cfg: &'a StochasticConfig, seed: u64) -> Self {
        Self {
            params,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: Vec::new(),
            clock: Vec::new(),
            vacant: Vec::new(),
            wheel: vec![Vec::new(); 1 << WHEEL_BITS],
            later: HashMap::new(),
            bound: 0,
            free_count: 0,
            removed: 0,
            step: 0,
            updates: 0,
            sigma_step: (2.0 * params.diffusion * cfg.dt_sim).sqrt(),
        }
    }

    fn insert(&mut self, p: [f64; 3]) -> u32 {
        self.free_count += 1;
        match self.vacant.pop() {
            Some(i) => {
                self.pos[i as usize] = p;
                self.clock[i as usize] = self.step;
                i
            }
            None => {
                self.pos.push(p);
                self.clock.push(self.step);
                (self.pos.len() - 1) as u32
            }
        }
    }

    fn retire(&mut self, i: u32) {
        self.free_count -= 1;
        self.vacant.push(i);
    }

    fn enqueue(&mut self, due: u64, i: u32) {
        debug_assert!(due > self.step);
        if due >> WHEEL_BITS == self.step >> WHEEL_BITS {
            self.wheel[(due & WHEEL_MASK) as usize].push(i);
        } else {
            self.later
                .entry(due >> WHEEL_BITS)
                .or_default()
                .push((due, i));
        }
    }

    /// Pick the next step at which ligand `i` (exact at the current step)
    /// must be looked at.
    ///
    /// Near the shell that is the next step. Further out the ligand waits
    /// `k` steps with `gap >= safety * sqrt(k) * sigma_step` and is then
    /// moved by one Gaussian draw. Far out it jumps to the surface of the
    /// largest ball that keeps `safety` single-step deviations from the
    /// shell, at an exit time drawn from the first-passage law, and
    /// diffuses freely for the rest of that step.
    fn schedule(&mut self, i: u32) {
        let idx = i as usize;
        debug_assert_eq!(self.clock[idx], self.step);
        if !self.cfg.skip_far_field || self.sigma_step == 0.0 {
            return self.enqueue(self.step + 1, i);
        }
        let guard = self.cfg.safety_sigmas * self.sigma_step;
        let gap = norm(&self.pos[idx]) - self.cfg.outer_radius();
        if gap < 1.5 * guard {
            let k = if gap <= 0.0 {
                1
            } else {
                ((gap / guard).powi(2).floor() as u64).max(1)
            };
            return self.enqueue(self.step + k, i);
        }
        let radius = gap - guard;
        let tau = ball_exit_tau(self.rng.random::<f64>());
        let exit = tau * radius * radius / self.params.diffusion;
        let steps = ((exit / self.cfg.dt_sim).ceil() as u64).clamp(1, 1 << 40);
        let rest = (steps as f64 * self.cfg.dt_sim - exit).max(0.0);
        let dir: [f64; 3] = UnitSphere.sample(&mut self.rng);
        let mut p = self.pos[idx];
        for (c, d) in p.iter_mut().zip(dir) {
            *c += radius * d;
        }
        displace(
            &mut p,
            (2.0 * self.params.diffusion * rest).sqrt(),
            &mut self.rng,
        );
        self.pos[idx] = p;
        self.clock[idx] = self.step + steps;
        self.enqueue(self.step + steps, i);
    }

    fn release(&mut self, count: usize) {
        for _ in 0..count {
            let i = self.insert([self.params.distance, 0.0, 0.0]);
            self.schedule(i);
        }
    }

    fn advance(&mut self) {
        let next = self.step + 1;
        if next & WHEEL_MASK == 0 {
            if let Some(items) = self.later.remove(&(next >> WHEEL_BITS)) {
                for (due, i) in items {
                    self.wheel[(due & WHEEL_MASK) as usize].push(i);
                }
            }
        }
        let active = std::mem::take(&mut self.wheel[(next & WHEEL_MASK) as usize]);
        self.step = next;

        let inner = self.cfg.receiver_radius;
        let outer = self.cfg.outer_radius();
        let far = removal_radius(self.params, self.cfg);
        let mut candidates = Vec::new();
        let mut survivors = Vec::with_capacity(active.len());
        for &i in &active {
            let idx = i as usize;
            let elapsed = (next - self.clock[idx]) as f64;
            let mut p = self.pos[idx];
            displace(&mut p, self.sigma_step * elapsed.sqrt(), &mut self.rng);
            reflect(&mut p, inner, &mut self.rng);
            self.pos[idx] = p;
            self.clock[idx] = next;
            let r = norm(&p);
            if r > far {
                self.removed += 1;
                self.retire(i);
                continue;
            }
            if r <= outer {
                candidates.push(i);
            }
            survivors.push(i);
        }
        self.updates += active.len() as u64;

        let mut bound = self.bound;
        let taken = bind_candidates(
            &mut candidates,
            &mut bound,
            self.params,
            self.cfg,
            &mut self.rng,
        );
        self.bound = bound;
        if !taken.is_empty() {
            let mut taken_sorted = taken.clone();
            taken_sorted.sort_unstable();
            survivors.retain(|i| taken_sorted.binary_search(i).is_err());
            for i in taken {
                self.retire(i);
            }
        }
        for i in survivors {
            self.schedule(i);
        }
        let mut spent = active;
        spent.clear();
        let slot = &mut self.wheel[(next & WHEEL_MASK) as usize];
        if slot.is_empty() {
            *slot = spent;
        }

        let released = unbind_count(self.bound, self.params, self.cfg, &mut self.rng);
        self.bound -= released;
        for _ in 0..released {
            let p = shell_point(self.cfg, &mut self.rng);
            let i = self.insert(p);
            self.enqueue(self.step + 1, i);
        }
    }

    fn total(&self) -> u64 {
        self.free_count + u64::from(self.bound) + self.removed
    }
}

fn validate_geometry(params: &ChannelParams, cfg: &StochasticConfig) -> Result<()> {
    cfg.validate()?;
    params.validate()?;
    if params.distance <= cfg.outer_radius() {
        return Err(Error::validation(format!(
            "transmitter distance {} m lies inside the sensing shell (outer radius {} m)",
            params.distance,
            cfg.outer_radius()
        )));
    }
    Ok(())
}

/// Bound-fraction trace of one replicate, sampled every `dt_sim`.
pub fn run_replicate(
    params: &ChannelParams,
    inputs: &[f64],
    cfg: &StochasticConfig,
    seed: u64,
) -> Result<BoundFractionTrace> {
    validate_inputs(inputs)?;
    validate_geometry(params, cfg)?;
    let horizon = params.symbol_duration * inputs.len() as f64;
    let steps = (horizon / cfg.dt_sim).round() as u64;
    // The allowance accrues with simulated time, starting one symbol
    // ahead, so a runaway configuration fails early instead of after
    // spending the whole run's budget.
    let allowance =
        |step: u64| cfg.work_cap * (step as f64 * cfg.dt_sim + params.symbol_duration).min(horizon);
    let release_steps: Vec<u64> = (0..inputs.len())
        .map(|n| (n as f64 * params.symbol_duration / cfg.dt_sim).round() as u64)
        .collect();

    let mut engine = Engine::new(params, cfg, seed);
    let mut samples = Vec::with_capacity(steps as usize + 1);
    samples.push(0.0);
    let n_receptors = f64::from(cfg.num_receptors);
    let mut next_symbol = 0;
    let mut released_total = 0u64;
    while engine.step < steps {
        while next_symbol < inputs.len() && release_steps[next_symbol] == engine.step {
            let count = pulse_size(inputs[next_symbol], params)?;
            engine.release(count);
            released_total += count as u64;
            next_symbol += 1;
        }
        engine.advance();
        debug_assert_eq!(engine.total(), released_total);
        if engine.updates as f64 > allowance(engine.step) {
            return Err(Error::ResourceCap(format!(
                "{} particle updates after {:.3} s of a {horizon:.3} s run exceed the cap of {} per simulated second \
                 (n_max = {}, D = {:e} m^2/s, d = {:e} m)",
                engine.updates,
                engine.step as f64 * cfg.dt_sim,
                cfg.work_cap,
                params.n_max,
                params.diffusion,
                params.distance
            )));
        }
        samples.push(f64::from(engine.bound) / n_receptors);
    }
    Ok(BoundFractionTrace {
        dt: cfg.dt_sim,
        t0: 0.0,
        samples,
    })
}

/// Independent replicates `r = 0..num_replicates` with seeds
/// `rng_seed + r`, in replicate order.
pub fn run_replicates(
    params: &ChannelParams,
    inputs: &[f64],
    cfg: &StochasticConfig,
) -> Result<Vec<BoundFractionTrace>> {
    cfg.validate()?;
    (0..cfg.num_replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(params, inputs, cfg, cfg.rng_seed.wrapping_add(r)))
        .collect()
}

/// Per-sample mean of equally sized traces.
pub fn mean_trace(traces: &[BoundFractionTrace]) -> Result<BoundFractionTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::validation("no traces to average"))?;
    if traces
        .iter()
        .any(|t| t.len() != first.len() || t.dt != first.dt)
    {
        return Err(Error::validation("traces differ in length or spacing"));
    }
    let k = traces.len() as f64;
    let samples = (0..first.len())
        .map(|i| (traces.iter().map(|t| t.samples[i]).sum::<f64>() / k).clamp(0.0, 1.0))
        .collect();
    Ok(BoundFractionTrace {
        dt: first.dt,
        t0: first.t0,
        samples,
    })
}

/// Mean bound-fraction trace over `num_replicates` independent runs.
pub fn run_stochastic(
    params: &ChannelParams,
    inputs: &[f64],
    cfg: &StochasticConfig,
) -> Result<BoundFractionTrace> {
    mean_trace(&run_replicates(params, inputs, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> StochasticConfig {
        StochasticConfig::default()
    }

    fn scatter(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| {
                let dir: [f64; 3] = UnitSphere.sample(rng);
                let r = rng.random_range(0.5e-6..3e-6);
                dir.map(|c| c * r)
            })
            .collect()
    }

    #[test]
    fn frozen_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ChannelParams {
            diffusion: 0.0,
            k_on: 0.0,
            k_off: 0.0,
            ..ChannelParams::FORECASTING
        };
        let positions = scatter(200, &mut rng);
        let mut state = ParticleState {
            positions: positions.clone(),
            bound_count: 17,
            ..Default::default()
        };
        for _ in 0..50 {
            step_particles(&mut state, &params, &cfg(), &mut rng);
        }
        assert_eq!(state.positions, positions);
        assert_eq!(state.bound_count, 17);
    }

    #[test]
    fn saturated_receptors_stay_saturated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ChannelParams {
            k_off: 0.0,
            ..ChannelParams::TRANSFORMATION
        };
        let c = cfg();
        let mut state = ParticleState {
            positions: scatter(500, &mut rng),
            bound_count: c.num_receptors,
            ..Default::default()
        };
        for _ in 0..100 {
            step_particles(&mut state, &params, &c, &mut rng);
            assert_eq!(state.bound_count, c.num_receptors);
        }
        assert_eq!(state.positions.len(), 500);
    }

    #[test]
    fn reflective_receiver_and_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ChannelParams {
            diffusion: 1e-10,
            ..ChannelParams::HYBRID
        };
        let c = StochasticConfig {
            removal_radius_factor: Some(1.2),
            ..cfg()
        };
        let mut state = ParticleState {
            positions: scatter(2000, &mut rng),
            ..Default::default()
        };
        let total = state.total();
        for _ in 0..200 {
            step_particles(&mut state, &params, &c, &mut rng);
            assert_eq!(state.total(), total);
            assert!(state.positions.iter().all(|p| norm(p) >= c.receiver_radius));
            assert!(state.bound_count <= c.num_receptors);
        }
        assert!(state.bound_count > 0);
    }

    #[test]
    fn unbinding_decay_matches_exponential() {
        let params = ChannelParams {
            k_on: 0.0,
            k_off: 2.0,
            ..ChannelParams::FORECASTING
        };
        let c = StochasticConfig {
            num_receptors: 50,
            dt_sim: 0.01,
            ..cfg()
        };
        let n0 = 50.0;
        let checkpoints = [10usize, 30, 60];
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let replicates = 1000;
        for r in 0..replicates {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + r);
            let mut state = ParticleState {
                bound_count: 50,
                ..Default::default()
            };
            for step in 1..=60 {
                step_particles(&mut state, &params, &c, &mut rng);
                if let Some(k) = checkpoints.iter().position(|&s| s == step) {
                    let b = f64::from(state.bound_count);
                    sums[k] += b;
                    sq[k] += b * b;
                }
            }
        }
        for (k, &s) in checkpoints.iter().enumerate() {
            let n = replicates as f64;
            let mean = sums[k] / n;
            let var = sq[k] / n - mean * mean;
            let se = (var / n).sqrt();
            let expected = n0 * (-2.0 * s as f64 * 0.01).exp();
            assert!(
                (mean - expected).abs() < 3.0 * se,
                "t={}: {mean} vs {expected} (se {se})",
                s as f64 * 0.01
            );
        }
    }

    #[test]
    fn pulse_sizes() {
        let mut state = ParticleState::default();
        assert_eq!(
            release_pulse(&mut state, 0.0, &ChannelParams::HYBRID).unwrap(),
            0
        );
        assert_eq!(
            release_pulse(&mut state, 1.0, &ChannelParams::HYBRID).unwrap(),
            11030
        );
        let p = ChannelParams::FORECASTING;
        assert_eq!(release_pulse(&mut state, 0.5, &p).unwrap(), 9700);
        assert_eq!(state.positions.len(), 11030 + 9700);
        let h = ChannelParams::HYBRID.distance;
        assert!(state.positions[..11030].iter().all(|q| *q == [h, 0.0, 0.0]));
        assert!(state.positions[11030..]
            .iter()
            .all(|q| *q == [p.distance, 0.0, 0.0]));
        assert!(release_pulse(&mut state, 1.1, &p).is_err());
    }

    #[test]
    fn zero_input_gives_zero_trace() {
        let c = StochasticConfig {
            num_replicates: 2,
            ..cfg()
        };
        let tr = run_stochastic(&ChannelParams::FORECASTING, &[0.0, 0.0, 0.0], &c).unwrap();
        assert!(tr.samples.iter().all(|&b| b == 0.0));
        assert_eq!(tr.dt, c.dt_sim);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let params = ChannelParams {
            n_max: 3000,
            ..ChannelParams::TRANSFORMATION
        };
        let c = StochasticConfig {
            num_replicates: 2,
            rng_seed: 9,
            ..cfg()
        };
        let a = run_stochastic(&params, &[1.0, 0.3], &c).unwrap();
        let b = run_stochastic(&params, &[1.0, 0.3], &c).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().any(|&b| b > 0.0));
        assert!(a.samples.iter().all(|b| (0.0..=1.0).contains(b)));
    }

    #[test]
    fn work_cap_trips() {
        let c = StochasticConfig {
            work_cap: 10.0,
            num_replicates: 1,
            ..cfg()
        };
        let err = run_stochastic(&ChannelParams::FORECASTING, &[1.0, 1.0], &c).unwrap_err();
        assert!(matches!(err, Error::ResourceCap(_)));
        assert!(err.to_string().contains("n_max = 19400"));
    }

    #[test]
    fn transmitter_inside_shell_rejected() {
        let p = ChannelParams {
            distance: 0.52e-6,
            ..ChannelParams::FORECASTING
        };
        assert!(run_stochastic(&p, &[1.0], &cfg()).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn exit_time_law() {
        // survival tabulated from the eigen series
        for (tau, surv) in [
            (0.05, 0.965_999),
            (0.1, 0.707_100),
            (0.2, 0.277_078),
            (0.4, 0.038_592),
        ] {
            let (cdf, _) = ball_exit_cdf(tau);
            assert!((1.0 - cdf - surv).abs() < 2e-6, "{tau}: {}", 1.0 - cdf);
        }
        // both forms agree where they meet
        let lo = ball_exit_cdf(0.25 - 1e-12);
        let hi = ball_exit_cdf(0.25);
        assert!((lo.0 - hi.0).abs() < 1e-10 && (lo.1 - hi.1).abs() < 1e-8);
        for u in [1e-9, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            let tau = ball_exit_tau(u);
            assert!((ball_exit_cdf(tau).0 - u).abs() < 1e-10, "{u}");
        }
    }

    #[test]
    fn exit_time_mean_is_one_sixth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| ball_exit_tau(rng.random())).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0 / 6.0).abs() < 4.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn hops_match_fixed_steps() {
        // Same pulse with and without the multi-rate driver: the bound
        // count after a few symbols must agree within sampling error.
        let p = ChannelParams {
            n_max: 2000,
            symbol_duration: 1.0,
            ..ChannelParams::FORECASTING
        };
        let base = StochasticConfig {
            num_replicates: 24,
            ..cfg()
        };
        let inputs = [1.0, 0.0];
        let lazy = run_stochastic(&p, &inputs, &base).unwrap();
        let fixed = run_stochastic(
            &p,
            &inputs,
            &StochasticConfig {
                skip_far_field: false,
                ..base
            },
        )
        .unwrap();
        let mean = |t: &BoundFractionTrace| t.samples.iter().sum::<f64>() / t.len() as f64;
        let (a, b) = (mean(&lazy), mean(&fixed));
        assert!(a > 0.0 && b > 0.0);
        assert!((a - b).abs() < 0.1 * b, "lazy {a} fixed {b}");
    }
}
