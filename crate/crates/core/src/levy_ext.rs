//! Finite-activity (compound-Poisson) jumps in the state or the observation.
//!
//! * State jumps `x ↦ x + G(x, w)` at rate `λ₀`, marks from the atom list;
//!   the grid solver uses the integro-differential generator of
//!   [`crate::models`].
//! * Observation jumps counted by `N_λ` with compensator `λ(x, w) ν(dw) dT`,
//!   `ν = λ₀ Σ p_w δ_w`, filtered by weighted particles with likelihood
//!
//! ```text
//! ln 𝓛 = Σ h ΔV − ½ Σ |h|² ΔT + Σ_events ln λ(X_{s−}, w) + Σ_w (1 − λ(X, w)) ν_w ΔT.
//! ```
//!
//! With finitely many atoms no small-jump compensation is needed.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fraccalc::ProductWeights;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::models::{JumpSpec, ModelSpec};
use crate::quadrature::pairwise_sum;
use crate::rng::{stream, Purpose};
use crate::sde_sim::{weighted_particles, ObservationRecord, ParticleEstimate, PathClock, StatePath, PARTICLE_STREAM_OFFSET};
use crate::subordinator::InversePath;
use crate::zakai_fractional::{solve_fractional_zakai_with, FractionalFilterGrid, FractionalOptions};

/// A jump at `time` with mark `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// State path with its jump log.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStatePath {
    pub path: StatePath,
    pub jumps: Vec<JumpEvent>,
}

fn require_state_jumps(model: &ModelSpec) -> Result<&JumpSpec> {
    model.state_jumps().ok_or_else(|| Error::domain("model has no state jump specification"))
}

fn require_observation_jumps(model: &ModelSpec) -> Result<&JumpSpec> {
    model.observation_jumps().ok_or_else(|| Error::domain("model has no observation jump specification"))
}

/// Euler–Maruyama between jump epochs spaced `Exp(λ₀)`; each epoch in
/// `(t_k, t_{k+1}]` applies `x ← x + G(x, w)` after the diffusion step.
pub fn simulate_jump_state(model: &ModelSpec, horizon: f64, step: f64, seed: u64, index: u64) -> Result<JumpStatePath> {
    let spec = require_state_jumps(model)?;
    let g = spec.state_map().expect("state jumps carry a map");
    let grid = TimeGrid::covering(horizon, step)?;
    let mut init_rng = stream(seed, index, Purpose::InitialState);
    let mut noise_rng = stream(seed, index, Purpose::StateNoise);
    let mut jump_rng = stream(seed, index, Purpose::StateJumps);
    let waiting = (spec.intensity() > 0.0).then(|| Exp::new(spec.intensity()).expect("positive rate"));
    let mut next_epoch = waiting.as_ref().map_or(f64::INFINITY, |e| e.sample(&mut jump_rng));

    let dt = grid.step();
    let sq = dt.sqrt();
    let mut x = model.initial.sample(&mut init_rng);
    let mut values = Vec::with_capacity(grid.len());
    let mut jumps = Vec::new();
    values.push(x);
    for k in 0..grid.steps() {
        let z: f64 = StandardNormal.sample(&mut noise_rng);
        x += model.drift.eval(x) * dt + model.diffusion.eval(x) * sq * z;
        let t_next = grid.time(k + 1);
        while next_epoch <= t_next {
            let w = spec.sample_mark(&mut jump_rng);
            x += g(x, w);
            jumps.push(JumpEvent { time: next_epoch, mark: w });
            next_epoch += waiting.as_ref().expect("epochs need a rate").sample(&mut jump_rng);
        }
        values.push(x);
    }
    Ok(JumpStatePath { path: StatePath::new(grid, 1, values, PathClock::Classical)?, jumps })
}

/// Fractional Zakai equation with the jump generator in `A*`.
pub fn solve_fractional_zakai_jump_state(
    model: &ModelSpec,
    grid: &SpatialGrid,
    clock: &InversePath,
    obs_operational: &ObservationRecord,
) -> Result<FractionalFilterGrid> {
    require_state_jumps(model)?;
    solve_fractional_zakai_with(model, grid, clock, obs_operational, FractionalOptions::default())
}

/// Observation with a continuous part `V` and marked jump events, on the
/// real-time grid of its clock.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpObservationRecord {
    continuous: ObservationRecord,
    events: Vec<JumpEvent>,
}

impl JumpObservationRecord {
    /// Event times must be strictly increasing and inside `(0, horizon]`.
    pub fn new(continuous: ObservationRecord, events: Vec<JumpEvent>) -> Result<Self> {
        let horizon = continuous.grid().horizon();
        if events.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::domain("jump event times must be strictly increasing"));
        }
        if events.iter().any(|e| !(e.time > 0.0) || e.time > horizon) {
            return Err(Error::domain(format!("jump events must lie in (0, {horizon}]")));
        }
        Ok(Self { continuous, events })
    }

    pub fn continuous(&self) -> &ObservationRecord {
        &self.continuous
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn grid(&self) -> &TimeGrid {
        self.continuous.grid()
    }

    /// Marks of the events in `(t_k, t_{k+1}]`, per step.
    fn marks_by_step(&self) -> Vec<Vec<f64>> {
        let grid = self.grid();
        let mut out = vec![Vec::new(); grid.steps()];
        for e in &self.events {
            let k = ((e.time / grid.step()).ceil() as usize).clamp(1, grid.steps()) - 1;
            out[k].push(e.mark);
        }
        out
    }
}

fn poisson_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Simulates the observation of the time-changed state `x` on the grid of
/// `clock`: `ΔV = h(X_k)ΔT_k + √ΔT_k N`, and for each atom a
/// `Poisson(λ(X_k, w) ν_w ΔT_k)` number of events placed uniformly in the
/// step. With `reference = true`, `h` and `λ` are replaced by 0 and 1
/// (the reference measure).
pub fn simulate_jump_observation(
    model: &ModelSpec,
    x: &StatePath,
    clock: &InversePath,
    reference: bool,
    seed: u64,
    index: u64,
) -> Result<JumpObservationRecord> {
    let spec = require_observation_jumps(model)?;
    let lambda = spec.rate_multiplier().expect("observation jumps carry a rate");
    if x.grid() != clock.grid() || x.dim() != 1 {
        return Err(Error::grid("state must be scalar and share the clock grid"));
    }
    let grid = *clock.grid();
    let m = model.obs_dim();
    let mut noise_rng = stream(seed, index, Purpose::ObservationNoise);
    let mut jump_rng = stream(seed, index, Purpose::ObservationJumps);
    let mut increments = Vec::with_capacity(grid.steps() * m);
    let mut events = Vec::new();
    for k in 0..grid.steps() {
        let xk = x.at(k)[0];
        let dtau = clock.increment(k);
        for h in &model.observation {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            let drift = if reference { 0.0 } else { h.eval(xk) * dtau };
            increments.push(drift + dtau.sqrt() * z);
        }
        let mut step_events = Vec::new();
        for (w, rate) in spec.atom_rates() {
            let mult = if reference { 1.0 } else { lambda(xk, w) };
            for _ in 0..poisson_count(mult * rate * dtau, &mut jump_rng) {
                let u: f64 = rng_open(&mut jump_rng);
                step_events.push(JumpEvent { time: grid.time(k) + u * grid.step(), mark: w });
            }
        }
        step_events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
        events.extend(step_events);
    }
    JumpObservationRecord::new(ObservationRecord::from_increments(grid, m, &increments)?, events)
}

/// Uniform in (0, 1].
fn rng_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Likelihood `𝓛` along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLikelihoodPath {
    grid: TimeGrid,
    log_values: Vec<f64>,
}

impl JumpLikelihoodPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn terminal(&self) -> f64 {
        self.log_values.last().expect("nonempty").exp()
    }
}

/// Per-step log-likelihood increment of the jump part at left-point state `x`.
fn jump_log_increment(spec: &JumpSpec, marks: &[f64], x: f64, dtau: f64) -> f64 {
    let lambda = spec.rate_multiplier().expect("observation jumps carry a rate");
    let mut acc = 0.0;
    for (w, rate) in spec.atom_rates() {
        acc += (1.0 - lambda(x, w)) * rate * dtau;
    }
    for &w in marks {
        let l = lambda(x, w);
        // ln of a nonpositive rate is NaN or −∞, which callers report
        acc += if l > 0.0 { l.ln() } else { f64::NAN };
    }
    acc
}

/// `𝓛` of the observation along the state path `x` (on the clock's grid),
/// with left-point sums and `λ` evaluated at the pre-jump state.
pub fn jump_observation_likelihood(model: &ModelSpec, x: &StatePath, clock: &InversePath, obs: &JumpObservationRecord) -> Result<JumpLikelihoodPath> {
    let spec = require_observation_jumps(model)?;
    if x.grid() != obs.grid() || clock.grid() != obs.grid() || x.dim() != 1 {
        return Err(Error::grid("state, clock and observation must share a grid"));
    }
    let marks = obs.marks_by_step();
    let v = obs.continuous();
    let mut log_values = Vec::with_capacity(obs.grid().len());
    let mut acc = 0.0;
    log_values.push(acc);
    for (k, step_marks) in marks.iter().enumerate().take(obs.grid().steps()) {
        let xk = x.at(k)[0];
        let dtau = clock.increment(k);
        for (c, h) in model.observation.iter().enumerate() {
            let hx = h.eval(xk);
            acc += hx * v.increment(k)[c] - 0.5 * hx * hx * dtau;
        }
        let jump = jump_log_increment(spec, step_marks, xk, dtau);
        if !jump.is_finite() {
            return Err(Error::Domain(format!("rate multiplier is not positive at x = {xk} (step {k})")));
        }
        acc += jump;
        log_values.push(acc);
    }
    Ok(JumpLikelihoodPath { grid: *obs.grid(), log_values })
}

/// A test function with its first two derivatives, used for `A f`.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    d2f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new<F, G, H>(f: F, df: G, d2f: H) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), df: Arc::new(df), d2f: Arc::new(d2f) }
    }

    pub fn identity() -> Self {
        Self::new(|x| x, |_| 1.0, |_| 0.0)
    }

    pub fn constant() -> Self {
        Self::new(|_| 1.0, |_| 0.0, |_| 0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `A f = b f' + ½ σ² f''`.
    pub fn generator(&self, model: &ModelSpec, x: f64) -> f64 {
        model.drift.eval(x) * (self.df)(x) + 0.5 * model.diffusion.eval(x).powi(2) * (self.d2f)(x)
    }
}

/// Residual of the fractional jump-observation Zakai equation at one real
/// time, averaged over particles, with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub t: f64,
    pub residual: f64,
    pub std_error: f64,
}

/// Output of [`fractional_filter_jump_obs`].
#[derive(Debug, Clone, PartialEq)]
pub struct JumpFilterReport {
    pub estimate: ParticleEstimate,
    pub residuals: Vec<ResidualRow>,
}

/// Particle filter for a time-changed diffusion observed through
/// continuous and jump channels. Particles share the clock, run under the
/// reference measure and are weighted by `𝓛`. At each checkpoint `t` the
/// residual
///
/// ```text
/// φ_t(f) − φ_0(f) − J^β φ(Af)(t) − Σ_k ∫ φ_s(h_k f) dV_k − ∫∫ φ_{s−}((λ − 1) f) d(N − ν dT)
/// ```
///
/// is estimated from the same particles, one sample per particle, so its
/// standard error covers all terms jointly.
pub fn fractional_filter_jump_obs(
    model: &ModelSpec,
    clock: &InversePath,
    obs: &JumpObservationRecord,
    f: &TestFunction,
    n_particles: usize,
    seed: u64,
    checkpoints: &[f64],
) -> Result<JumpFilterReport> {
    let spec = require_observation_jumps(model)?;
    if obs.grid() != clock.grid() {
        return Err(Error::grid("observation and clock must share a grid"));
    }
    let grid = *clock.grid();
    let marks = obs.marks_by_step();
    let dtau: Vec<f64> = (0..grid.steps()).map(|k| clock.increment(k)).collect();
    let extra = |k: usize, x: &[f64]| jump_log_increment(spec, &marks[k], x[0], dtau[k]);
    let fv = |x: &[f64]| f.value(x[0]);
    let estimate = weighted_particles(model, clock, obs.continuous(), &fv, Some(&extra), n_particles, seed)?;

    let nodes: Vec<usize> = checkpoints
        .iter()
        .map(|&t| grid.node_of(t).ok_or_else(|| Error::grid(format!("checkpoint {t} is not a grid node"))))
        .collect::<Result<_>>()?;
    let residuals = if nodes.is_empty() {
        Vec::new()
    } else {
        particle_residuals(model, spec, clock, obs, &marks, f, n_particles, seed, &nodes)?
    };
    Ok(JumpFilterReport { estimate, residuals })
}

#[allow(clippy::too_many_arguments)]
fn particle_residuals(
    model: &ModelSpec,
    spec: &JumpSpec,
    clock: &InversePath,
    obs: &JumpObservationRecord,
    marks: &[Vec<f64>],
    f: &TestFunction,
    n: usize,
    seed: u64,
    nodes: &[usize],
) -> Result<Vec<ResidualRow>> {
    let grid = *clock.grid();
    let lambda = spec.rate_multiplier().expect("observation jumps carry a rate");
    let weights = ProductWeights::new(model.beta, grid.step(), grid.len())?;
    let v = obs.continuous();
    let last = *nodes.iter().max().expect("nonempty");
    let dtau: Vec<f64> = (0..grid.steps()).map(|k| clock.increment(k)).collect();

    // one residual sample per particle and checkpoint
    let samples: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = crate::sde_sim::euler_state(model, &dtau[..last], seed, PARTICLE_STREAM_OFFSET + i as u64);
            let mut log_l = vec![0.0; last + 1];
            for k in 0..last {
                let mut inc = 0.0;
                for (c, h) in model.observation.iter().enumerate() {
                    let hx = h.eval(x[k]);
                    inc += hx * v.increment(k)[c] - 0.5 * hx * hx * dtau[k];
                }
                inc += jump_log_increment(spec, &marks[k], x[k], dtau[k]);
                log_l[k + 1] = log_l[k] + inc;
            }
            if log_l.iter().any(|l| !l.is_finite()) {
                return Err(Error::Domain(format!("likelihood undefined for particle {i}")));
            }
            let l: Vec<f64> = log_l.iter().map(|v| v.exp()).collect();
            let af: Vec<f64> = (0..=last).map(|k| f.generator(model, x[k]) * l[k]).collect();
            // running sums of the stochastic integrals up to each node
            let mut stoch = vec![0.0; last + 1];
            for k in 0..last {
                let fl = f.value(x[k]) * l[k];
                let mut s = 0.0;
                for (c, h) in model.observation.iter().enumerate() {
                    s += h.eval(x[k]) * fl * v.increment(k)[c];
                }
                for &w in &marks[k] {
                    s += (lambda(x[k], w) - 1.0) * fl;
                }
                for (w, rate) in spec.atom_rates() {
                    s -= (lambda(x[k], w) - 1.0) * fl * rate * dtau[k];
                }
                stoch[k + 1] = stoch[k] + s;
            }
            let f0 = f.value(x[0]);
            Ok(nodes
                .iter()
                .map(|&kk| f.value(x[kk]) * l[kk] - f0 - weights.apply_at(&af, kk) - stoch[kk])
                .collect())
        })
        .collect();
    let samples: Vec<Vec<f64>> = samples.into_iter().collect::<Result<_>>()?;

    Ok(nodes
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let column: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            let mean = pairwise_sum(&column) / n as f64;
            let var = pairwise_sum(&column.iter().map(|r| (r - mean).powi(2)).collect::<Vec<_>>()) / (n as f64 - 1.0);
            ResidualRow { t: grid.time(k), residual: mean, std_error: (var / n as f64).sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Coefficient, InitialLaw, JumpAtom};
    use crate::sde_sim::{simulate_classical_pair, time_changed_particle_estimate};

    fn jump_state_model(rate: f64) -> ModelSpec {
        ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5)
            .unwrap()
            .with_jumps(JumpSpec::state(rate, vec![JumpAtom { mark: 0.5, probability: 1.0 }], |_, w| w).unwrap())
    }

    #[test]
    fn zero_rate_state_matches_the_classical_path() {
        let a = simulate_jump_state(&jump_state_model(0.0), 1.0, 0.01, 5, 0).unwrap();
        let (y, _) = simulate_classical_pair(&jump_state_model(0.0), 1.0, 0.01, 5).unwrap();
        assert!(a.jumps.is_empty());
        assert_eq!(a.path.values(), y.values());
    }

    #[test]
    fn jump_log_is_ordered() {
        let a = simulate_jump_state(&jump_state_model(5.0), 2.0, 0.01, 5, 0).unwrap();
        assert!(!a.jumps.is_empty());
        assert!(a.jumps.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.jumps.iter().all(|j| j.mark == 0.5 && j.time <= 2.0));
    }

    #[test]
    fn single_event_likelihood_by_hand() {
        let model = ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), vec![Coefficient::constant(0.0)], 0.5, InitialLaw::Point(0.0))
            .unwrap()
            .with_jumps(JumpSpec::observation(1.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |_, _| 2.0).unwrap());
        let grid = TimeGrid::covering(1.0, 0.01).unwrap();
        let clock = InversePath::identity(grid);
        let x = StatePath::new(grid, 1, vec![0.0; grid.len()], PathClock::Classical).unwrap();
        let v = ObservationRecord::from_increments(grid, 1, &vec![0.0; grid.steps()]).unwrap();
        let obs = JumpObservationRecord::new(v, vec![JumpEvent { time: 0.5, mark: 1.0 }]).unwrap();
        let l = jump_observation_likelihood(&model, &x, &clock, &obs).unwrap();
        assert!((l.terminal() - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(l.values()[0], 1.0);
    }

    #[test]
    fn nonpositive_rates_are_rejected() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 0.0, 0.5)
            .unwrap()
            .with_jumps(JumpSpec::observation(1.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |x, _| x).unwrap());
        let grid = TimeGrid::covering(1.0, 0.01).unwrap();
        let clock = InversePath::identity(grid);
        let x = StatePath::new(grid, 1, vec![-1.0; grid.len()], PathClock::Classical).unwrap();
        let v = ObservationRecord::from_increments(grid, 1, &vec![0.0; grid.steps()]).unwrap();
        let obs = JumpObservationRecord::new(v.clone(), vec![JumpEvent { time: 0.3, mark: 1.0 }]).unwrap();
        assert!(matches!(jump_observation_likelihood(&model, &x, &clock, &obs), Err(Error::Domain(_))));
        assert!(JumpObservationRecord::new(v, vec![JumpEvent { time: 0.3, mark: 1.0 }, JumpEvent { time: 0.3, mark: 1.0 }]).is_err());
    }

    #[test]
    fn unit_rate_without_observation_carries_no_information() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 0.0, 0.5)
            .unwrap()
            .with_jumps(JumpSpec::observation(2.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |_, _| 1.0).unwrap());
        let (y, _) = simulate_classical_pair(&model, 1.0, 0.01, 3).unwrap();
        let clock = InversePath::identity(*y.grid());
        let obs = simulate_jump_observation(&model, &y, &clock, false, 3, 0).unwrap();
        let l = jump_observation_likelihood(&model, &y, &clock, &obs).unwrap();
        assert!(l.log_values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn no_jump_measure_reduces_to_the_continuous_filter() {
        let model = ModelSpec::jump_poisson(0.5).unwrap();
        let silent = model.clone().with_jumps(JumpSpec::observation(0.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |x, _| 1.0 + 0.5 * x.tanh()).unwrap());
        let grid = TimeGrid::covering(0.5, 0.01).unwrap();
        let clock = crate::subordinator::sample_inverse_path(0.5, &grid, 0.01, 2, 0).unwrap();
        let x = crate::sde_sim::simulate_time_changed_state_direct(&silent, &clock, 2, 0).unwrap();
        let obs = simulate_jump_observation(&silent, &x, &clock, false, 2, 0).unwrap();
        assert!(obs.events().is_empty());
        let f = TestFunction::identity();
        let jump = fractional_filter_jump_obs(&silent, &clock, &obs, &f, 300, 9, &[]).unwrap();
        let plain = time_changed_particle_estimate(&silent, &clock, obs.continuous(), &|x| x[0], 300, 9).unwrap();
        assert_eq!(jump.estimate, plain);
        let one = fractional_filter_jump_obs(&silent, &clock, &obs, &TestFunction::constant(), 300, 9, &[]).unwrap();
        assert!(one.estimate.normalized.iter().all(|v| *v == 1.0));
    }
}
