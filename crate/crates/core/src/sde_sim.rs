//! Path simulation for classical and time-changed filtering problems,
//! likelihood processes and weighted-particle (Kallianpur–Striebel)
//! estimates.
//!
//! Stochastic sums are left-point (Itô) throughout. Every particle draws from
//! its own `(seed, index)` streams, and particle reductions run in fixed
//! chunks combined in order, so results do not depend on thread scheduling.

use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{interpolate, TimeGrid};
use crate::models::{InitialLaw, ModelSpec};
use crate::quadrature::pairwise_sum;
use crate::rng::{stream, Purpose, StreamRng};
use crate::subordinator::InversePath;

/// Stream index offset for reference-measure particles, keeping them
/// disjoint from the streams of the simulated signal (index 0, 1, …).
pub const PARTICLE_STREAM_OFFSET: u64 = 1 << 32;

/// Particles per reduction chunk.
const CHUNK: usize = 256;

/// State and observation dynamics for Monte-Carlo simulation, with diagonal
/// diffusion and any state dimension.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// Diagonal of the diffusion matrix.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn observation(&self, x: &[f64], out: &mut [f64]);
    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]);

    /// Applies the state jumps of an operational-time interval of length
    /// `dtau`. No jumps by default.
    fn apply_state_jumps(&self, _x: &mut [f64], _dtau: f64, _rng: &mut StreamRng) {}
}

impl Dynamics for ModelSpec {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.observation.len()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.drift.eval(x[0]);
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.diffusion.eval(x[0]);
    }

    fn observation(&self, x: &[f64], out: &mut [f64]) {
        for (o, h) in out.iter_mut().zip(&self.observation) {
            *o = h.eval(x[0]);
        }
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = self.initial.sample(rng);
    }

    fn apply_state_jumps(&self, x: &mut [f64], dtau: f64, rng: &mut StreamRng) {
        let Some(spec) = self.state_jumps() else { return };
        let rate = spec.intensity() * dtau;
        if rate <= 0.0 {
            return;
        }
        let g = spec.state_map().expect("state jumps carry a map");
        let count = Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(0);
        for _ in 0..count {
            let w = spec.sample_mark(rng);
            x[0] += g(x[0], w);
        }
    }
}

type VectorFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Multi-dimensional dynamics from closures, for Monte-Carlo use.
pub struct VectorModel {
    state_dim: usize,
    obs_dim: usize,
    drift: VectorFn,
    diffusion: VectorFn,
    observation: VectorFn,
    initial: Vec<InitialLaw>,
}

impl VectorModel {
    pub fn new(obs_dim: usize, drift: VectorFn, diffusion: VectorFn, observation: VectorFn, initial: Vec<InitialLaw>) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::domain("vector model needs at least one state component"));
        }
        Ok(Self { state_dim: initial.len(), obs_dim, drift, diffusion, observation, initial })
    }
}

impl Dynamics for VectorModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    fn observation(&self, x: &[f64], out: &mut [f64]) {
        (self.observation)(x, out)
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for (o, law) in out.iter_mut().zip(&self.initial) {
            *o = law.sample(rng);
        }
    }
}

/// Whether a path runs on the operational clock or on real time through `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathClock {
    Classical,
    TimeChanged,
}

/// State path `Y` (classical) or `X = Y∘T` (time-changed), row-major with
/// `dim` components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    clock: PathClock,
}

impl StatePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>, clock: PathClock) -> Result<Self> {
        if dim == 0 || values.len() != grid.len() * dim {
            return Err(Error::grid("state path length does not match its grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("state path contains non-finite values".into()));
        }
        Ok(Self { grid, dim, values, clock })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clock(&self) -> PathClock {
        self.clock
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// State at node `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Component `c` over all nodes.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

/// Observation path `Z` (or `V = Z∘T`) with one column per channel and its
/// increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    grid: TimeGrid,
    channels: usize,
    values: Vec<f64>,
    increments: Vec<f64>,
}

impl ObservationRecord {
    /// From node values; every channel must start at 0.
    pub fn new(grid: TimeGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * channels {
            return Err(Error::grid("observation length does not match its grid"));
        }
        if values[..channels].iter().any(|v| *v != 0.0) {
            return Err(Error::domain("observation must start at 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("observation contains non-finite values".into()));
        }
        let increments = (0..grid.steps() * channels).map(|i| values[i + channels] - values[i]).collect();
        Ok(Self { grid, channels, values, increments })
    }

    /// From increments, accumulated from 0.
    pub fn from_increments(grid: TimeGrid, channels: usize, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.steps() * channels {
            return Err(Error::grid("increment count does not match the grid"));
        }
        let mut values = vec![0.0; grid.len() * channels];
        for k in 0..grid.steps() {
            for c in 0..channels {
                values[(k + 1) * channels + c] = values[k * channels + c] + increments[k * channels + c];
            }
        }
        Self::new(grid, channels, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Increments `Z_{k+1} − Z_k` of all channels at step `k`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.channels..(k + 1) * self.channels]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Channel values at time `t` by linear interpolation.
    pub fn value_at(&self, t: f64) -> Option<Vec<f64>> {
        (0..self.channels).map(|c| interpolate(&self.grid, &self.channel(c), t)).collect()
    }

    /// `Z∘T` on the grid of `clock`.
    pub fn compose(&self, clock: &InversePath) -> Result<Self> {
        check_covers(&self.grid, clock)?;
        let columns: Vec<Vec<f64>> = (0..self.channels).map(|c| self.channel(c)).collect();
        let mut values = Vec::with_capacity(clock.grid().len() * self.channels);
        for &tau in clock.values() {
            for col in &columns {
                values.push(interpolate(&self.grid, col, tau).expect("clock is covered"));
            }
        }
        Self::new(*clock.grid(), self.channels, values)
    }
}

/// Likelihood `Λ` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl LikelihoodPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_covers(grid: &TimeGrid, clock: &InversePath) -> Result<()> {
    let needed = clock.max_value();
    if needed > grid.horizon() * (1.0 + 1e-12) {
        return Err(Error::Horizon(format!(
            "clock reaches operational time {needed} but the path stops at {}; resimulate with a longer horizon",
            grid.horizon()
        )));
    }
    Ok(())
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Euler–Maruyama state along clock increments `dtau`; returns `len · dim` values.
pub(crate) fn euler_state<D: Dynamics + ?Sized>(model: &D, dtau: &[f64], seed: u64, index: u64) -> Vec<f64> {
    let dim = model.state_dim();
    let mut init_rng = stream(seed, index, Purpose::InitialState);
    let mut noise_rng = stream(seed, index, Purpose::StateNoise);
    let mut jump_rng = stream(seed, index, Purpose::StateJumps);
    let mut values = Vec::with_capacity((dtau.len() + 1) * dim);
    let mut x = vec![0.0; dim];
    model.sample_initial(&mut init_rng, &mut x);
    values.extend_from_slice(&x);
    let (mut b, mut s) = (vec![0.0; dim], vec![0.0; dim]);
    for &dt in dtau {
        model.drift(&x, &mut b);
        model.diffusion(&x, &mut s);
        let sq = dt.sqrt();
        for i in 0..dim {
            x[i] += b[i] * dt + s[i] * sq * normal(&mut noise_rng);
        }
        model.apply_state_jumps(&mut x, dt, &mut jump_rng);
        values.extend_from_slice(&x);
    }
    values
}

/// Simulates `(Y, Z)` on `[0, horizon]` for the signal stream `index = 0`.
pub fn simulate_classical_pair<D: Dynamics + ?Sized>(model: &D, horizon: f64, step: f64, seed: u64) -> Result<(StatePath, ObservationRecord)> {
    simulate_classical_pair_indexed(model, horizon, step, seed, 0)
}

/// Simulates `(Y, Z)`: Euler–Maruyama for `Y`, and `ΔZ = h(Y_k)Δτ + ΔW`.
pub fn simulate_classical_pair_indexed<D: Dynamics + ?Sized>(
    model: &D,
    horizon: f64,
    step: f64,
    seed: u64,
    index: u64,
) -> Result<(StatePath, ObservationRecord)> {
    let grid = TimeGrid::covering(horizon, step)?;
    simulate_on_grid(model, grid, seed, index)
}

/// Like [`simulate_classical_pair_indexed`] on a grid that reaches at least `level`.
pub fn simulate_classical_pair_covering<D: Dynamics + ?Sized>(
    model: &D,
    level: f64,
    step: f64,
    seed: u64,
    index: u64,
) -> Result<(StatePath, ObservationRecord)> {
    if !(step > 0.0) {
        return Err(Error::domain(format!("time step must be positive, got {step}")));
    }
    let steps = ((level / step).ceil() as usize).max(1);
    simulate_on_grid(model, TimeGrid::new(step, steps + 1)?, seed, index)
}

fn simulate_on_grid<D: Dynamics + ?Sized>(model: &D, grid: TimeGrid, seed: u64, index: u64) -> Result<(StatePath, ObservationRecord)> {
    let dt = grid.step();
    let y = euler_state(model, &vec![dt; grid.steps()], seed, index);
    let dim = model.state_dim();
    let m = model.obs_dim();
    let mut obs_rng = stream(seed, index, Purpose::ObservationNoise);
    let mut h = vec![0.0; m];
    let mut increments = Vec::with_capacity(grid.steps() * m);
    let sq = dt.sqrt();
    for k in 0..grid.steps() {
        model.observation(&y[k * dim..(k + 1) * dim], &mut h);
        for hc in &h {
            increments.push(hc * dt + sq * normal(&mut obs_rng));
        }
    }
    let state = StatePath::new(grid, dim, y, PathClock::Classical)?;
    let obs = ObservationRecord::from_increments(grid, m, &increments)?;
    Ok((state, obs))
}

/// `X_t = Y_{T_t}` and `V_t = Z_{T_t}` by linear interpolation on the
/// operational grid.
pub fn time_change_pair(y: &StatePath, z: &ObservationRecord, clock: &InversePath) -> Result<(StatePath, ObservationRecord)> {
    if y.grid() != z.grid() {
        return Err(Error::grid("state and observation must share a grid"));
    }
    check_covers(y.grid(), clock)?;
    let columns: Vec<Vec<f64>> = (0..y.dim()).map(|c| y.component(c)).collect();
    let mut values = Vec::with_capacity(clock.grid().len() * y.dim());
    for &tau in clock.values() {
        for col in &columns {
            values.push(interpolate(y.grid(), col, tau).expect("clock is covered"));
        }
    }
    let x = StatePath::new(*clock.grid(), y.dim(), values, PathClock::TimeChanged)?;
    Ok((x, z.compose(clock)?))
}

/// Direct discretisation of the time-changed state equation:
/// `ΔX = b(X)ΔT + σ(X)·N(0, ΔT)` on the real-time grid of `clock`.
pub fn simulate_time_changed_state_direct<D: Dynamics + ?Sized>(model: &D, clock: &InversePath, seed: u64, index: u64) -> Result<StatePath> {
    let dtau: Vec<f64> = (0..clock.grid().steps()).map(|k| clock.increment(k)).collect();
    let values = euler_state(model, &dtau, seed, index);
    StatePath::new(*clock.grid(), model.state_dim(), values, PathClock::TimeChanged)
}

/// Log-likelihood exponent `Σ h(X_k)·ΔV_k − ½ |h(X_k)|² ΔT_k` accumulated
/// along the path, with clock increments `dtau`.
fn log_likelihood<D: Dynamics + ?Sized>(model: &D, x: &[f64], dim: usize, obs: &ObservationRecord, dtau: &[f64]) -> Vec<f64> {
    let m = obs.channels();
    let mut h = vec![0.0; m];
    let mut out = Vec::with_capacity(dtau.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for (k, dt) in dtau.iter().enumerate() {
        model.observation(&x[k * dim..(k + 1) * dim], &mut h);
        let dz = obs.increment(k);
        let mut inc = 0.0;
        let mut norm = 0.0;
        for c in 0..m {
            inc += h[c] * dz[c];
            norm += h[c] * h[c];
        }
        acc += inc - 0.5 * norm * dt;
        out.push(acc);
    }
    out
}

fn check_obs_dims<D: Dynamics + ?Sized>(model: &D, obs: &ObservationRecord) -> Result<()> {
    if obs.channels() != model.obs_dim() {
        return Err(Error::grid(format!("model has {} observation channels, record has {}", model.obs_dim(), obs.channels())));
    }
    Ok(())
}

/// `Λ_t = exp{Σ_k ∫ h_k(Y) dZ_k − ½ ∫ |h(Y)|² ds}` with left-point sums.
pub fn likelihood_path<D: Dynamics + ?Sized>(model: &D, y: &StatePath, z: &ObservationRecord) -> Result<LikelihoodPath> {
    if y.grid() != z.grid() {
        return Err(Error::grid("state and observation must share a grid"));
    }
    check_obs_dims(model, z)?;
    let dtau = vec![y.grid().step(); y.grid().steps()];
    let values = log_likelihood(model, y.values(), y.dim(), z, &dtau).into_iter().map(f64::exp).collect();
    Ok(LikelihoodPath { grid: *y.grid(), values })
}

/// Likelihood `Λ_{T_t}` of a time-changed pair, with `−½|h|² ΔT` in place of `Δt`.
pub fn likelihood_path_on_clock<D: Dynamics + ?Sized>(model: &D, x: &StatePath, v: &ObservationRecord, clock: &InversePath) -> Result<LikelihoodPath> {
    if x.grid() != v.grid() || x.grid() != clock.grid() {
        return Err(Error::grid("state, observation and clock must share a grid"));
    }
    check_obs_dims(model, v)?;
    let dtau: Vec<f64> = (0..clock.grid().steps()).map(|k| clock.increment(k)).collect();
    let values = log_likelihood(model, x.values(), x.dim(), v, &dtau).into_iter().map(f64::exp).collect();
    Ok(LikelihoodPath { grid: *x.grid(), values })
}

/// Weighted-particle estimates of `E[f(X_t) | observations]` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEstimate {
    pub grid: TimeGrid,
    /// Self-normalised posterior expectation.
    pub normalized: Vec<f64>,
    /// `(1/N) Σ f(X^i) Λ^i`, the unnormalised filter.
    pub unnormalized: Vec<f64>,
    /// Standard error of `normalized` (delta method).
    pub std_error: Vec<f64>,
    pub ess: Vec<f64>,
    /// True if the effective sample size fell below 2 at some node.
    pub collapsed: bool,
}

/// Per-node weighted sums of one chunk, relative to `shift`.
#[derive(Clone)]
struct ChunkSums {
    shift: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s2f: Vec<f64>,
    s2ff: Vec<f64>,
}

/// Log-weight increment of an extra likelihood factor at step `k` given the
/// left-point state, e.g. observation jumps.
pub(crate) type ExtraLogWeight<'a> = dyn Fn(usize, &[f64]) -> f64 + Sync + 'a;

/// Runs `n` reference-measure particles along `clock` and weights them by the
/// likelihood of `obs` (increments on the clock's real-time grid).
pub(crate) fn weighted_particles<D: Dynamics + ?Sized>(
    model: &D,
    clock: &InversePath,
    obs: &ObservationRecord,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    extra: Option<&ExtraLogWeight<'_>>,
    n: usize,
    seed: u64,
) -> Result<ParticleEstimate> {
    if n < 100 {
        return Err(Error::domain(format!("need at least 100 particles, got {n}")));
    }
    if obs.grid() != clock.grid() {
        return Err(Error::grid("observation and clock must share a grid"));
    }
    check_obs_dims(model, obs)?;
    let grid = *clock.grid();
    let len = grid.len();
    let dim = model.state_dim();
    let dtau: Vec<f64> = (0..grid.steps()).map(|k| clock.increment(k)).collect();
    let chunks: Vec<(usize, usize)> = (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect();

    let sums: Vec<Result<ChunkSums>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let width = end - start;
            let mut lw = vec![0.0; len * width];
            let mut fv = vec![0.0; len * width];
            for (p, i) in (start..end).enumerate() {
                let x = euler_state(model, &dtau, seed, PARTICLE_STREAM_OFFSET + i as u64);
                let mut ll = log_likelihood(model, &x, dim, obs, &dtau);
                if let Some(extra) = extra {
                    let mut acc = 0.0;
                    for k in 0..grid.steps() {
                        acc += extra(k, &x[k * dim..(k + 1) * dim]);
                        ll[k + 1] += acc;
                    }
                }
                for k in 0..len {
                    if !ll[k].is_finite() {
                        return Err(Error::Domain(format!("likelihood undefined for particle {i} at node {k}")));
                    }
                    lw[k * width + p] = ll[k];
                    fv[k * width + p] = f(&x[k * dim..(k + 1) * dim]);
                }
            }
            let mut out = ChunkSums {
                shift: vec![0.0; len],
                s0: vec![0.0; len],
                s1: vec![0.0; len],
                s2: vec![0.0; len],
                s2f: vec![0.0; len],
                s2ff: vec![0.0; len],
            };
            for k in 0..len {
                let row = &lw[k * width..(k + 1) * width];
                let fr = &fv[k * width..(k + 1) * width];
                let shift = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                let w: Vec<f64> = row.iter().map(|v| (v - shift).exp()).collect();
                out.shift[k] = shift;
                out.s0[k] = pairwise_sum(&w);
                out.s1[k] = pairwise_sum(&w.iter().zip(fr).map(|(a, b)| a * b).collect::<Vec<_>>());
                out.s2[k] = pairwise_sum(&w.iter().map(|a| a * a).collect::<Vec<_>>());
                out.s2f[k] = pairwise_sum(&w.iter().zip(fr).map(|(a, b)| a * a * b).collect::<Vec<_>>());
                out.s2ff[k] = pairwise_sum(&w.iter().zip(fr).map(|(a, b)| a * a * b * b).collect::<Vec<_>>());
            }
            Ok(out)
        })
        .collect();
    let sums: Vec<ChunkSums> = sums.into_iter().collect::<Result<_>>()?;

    let mut est = ParticleEstimate {
        grid,
        normalized: Vec::with_capacity(len),
        unnormalized: Vec::with_capacity(len),
        std_error: Vec::with_capacity(len),
        ess: Vec::with_capacity(len),
        collapsed: false,
    };
    for k in 0..len {
        let global = sums.iter().fold(f64::NEG_INFINITY, |m, c| m.max(c.shift[k]));
        let mut t = [0.0; 5];
        for c in &sums {
            let r = (c.shift[k] - global).exp();
            let r2 = r * r;
            t[0] += r * c.s0[k];
            t[1] += r * c.s1[k];
            t[2] += r2 * c.s2[k];
            t[3] += r2 * c.s2f[k];
            t[4] += r2 * c.s2ff[k];
        }
        let mean = t[1] / t[0];
        let var = ((t[4] - 2.0 * mean * t[3] + mean * mean * t[2]) / (t[0] * t[0])).max(0.0);
        let ess = t[0] * t[0] / t[2];
        est.normalized.push(mean);
        est.unnormalized.push(global.exp() * t[1] / n as f64);
        est.std_error.push(var.sqrt());
        est.ess.push(ess);
        if ess < 2.0 {
            est.collapsed = true;
        }
    }
    Ok(est)
}

/// Kallianpur–Striebel estimate of `E[f(Y_t) | Z_s, s ≤ t]` from `n`
/// reference-measure particles weighted against the given observation path.
pub fn kallianpur_striebel_estimate<D: Dynamics + ?Sized>(
    model: &D,
    observed: &ObservationRecord,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_particles: usize,
    seed: u64,
) -> Result<ParticleEstimate> {
    let clock = InversePath::identity(*observed.grid());
    weighted_particles(model, &clock, observed, f, None, n_particles, seed)
}

/// Time-changed analogue: particles `X = Y∘T` share the clock `T`, weights
/// use `ΔV` and `ΔT`.
pub fn time_changed_particle_estimate<D: Dynamics + ?Sized>(
    model: &D,
    clock: &InversePath,
    observed: &ObservationRecord,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_particles: usize,
    seed: u64,
) -> Result<ParticleEstimate> {
    weighted_particles(model, clock, observed, f, None, n_particles, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Coefficient;
    use crate::subordinator::sample_inverse_path;

    fn degenerate() -> ModelSpec {
        ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), vec![Coefficient::constant(0.0)], 0.5, InitialLaw::Point(1.5)).unwrap()
    }

    #[test]
    fn degenerate_coefficients_give_constant_state_and_pure_noise() {
        let (y, z) = simulate_classical_pair(&degenerate(), 1.0, 0.01, 3).unwrap();
        assert!(y.values().iter().all(|v| *v == 1.5));
        assert_eq!(z.values()[0], 0.0);
        let var: f64 = z.increments().iter().map(|d| d * d).sum();
        assert!((var - 1.0).abs() < 0.5);
    }

    #[test]
    fn simulation_is_deterministic() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 1.0, 0.5).unwrap();
        let a = simulate_classical_pair(&model, 1.0, 0.01, 11).unwrap();
        let b = simulate_classical_pair(&model, 1.0, 0.01, 11).unwrap();
        let c = simulate_classical_pair(&model, 1.0, 0.01, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn identity_clock_is_a_no_op() {
        let model = ModelSpec::benes_like(0.5).unwrap();
        let (y, z) = simulate_classical_pair(&model, 1.0, 0.01, 5).unwrap();
        let clock = InversePath::identity(*y.grid());
        let (x, v) = time_change_pair(&y, &z, &clock).unwrap();
        assert_eq!(x.values(), y.values());
        assert_eq!(v.values(), z.values());
        // identical draws; only the rounding of the clock increments differs
        let direct = simulate_time_changed_state_direct(&model, &clock, 5, 0).unwrap();
        for (a, b) in direct.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn plateaus_freeze_the_time_changed_pair() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5).unwrap();
        let grid = TimeGrid::covering(1.0, 1e-2).unwrap();
        // identity up to 0.3, flat until 0.6, then unit slope again
        let values: Vec<f64> = grid.times().map(|t| if t < 0.3 { t } else if t < 0.6 { 0.3 } else { t - 0.3 }).collect();
        let clock = InversePath::from_values(grid, values).unwrap();
        let (y, z) = simulate_classical_pair_covering(&model, clock.max_value(), 1e-2, 21, 0).unwrap();
        let (x, v) = time_change_pair(&y, &z, &clock).unwrap();
        let direct = simulate_time_changed_state_direct(&model, &clock, 21, 0).unwrap();
        let mut flat = 0;
        for k in 0..grid.steps() {
            if clock.increment(k) == 0.0 {
                flat += 1;
                assert_eq!(x.at(k), x.at(k + 1));
                assert_eq!(v.increment(k), &[0.0]);
                assert_eq!(direct.at(k), direct.at(k + 1));
            }
        }
        assert!(flat >= 29);
        assert_eq!(v.values()[0], 0.0);
    }

    #[test]
    fn sampled_clocks_compose() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5).unwrap();
        let grid = TimeGrid::covering(1.0, 1e-3).unwrap();
        let clock = sample_inverse_path(0.5, &grid, 1e-3, 21, 0).unwrap();
        let (y, z) = simulate_classical_pair_covering(&model, clock.max_value(), 1e-3, 21, 0).unwrap();
        let (x, v) = time_change_pair(&y, &z, &clock).unwrap();
        assert_eq!(x.grid(), clock.grid());
        assert_eq!(x.clock(), PathClock::TimeChanged);
        let last = grid.steps();
        let want = interpolate(y.grid(), &y.component(0), clock.max_value()).unwrap();
        assert_eq!(x.at(last)[0], want);
        assert_eq!(v.values()[0], 0.0);
    }

    #[test]
    fn short_paths_are_reported() {
        let model = ModelSpec::benes_like(0.5).unwrap();
        let (y, z) = simulate_classical_pair(&model, 0.5, 0.01, 1).unwrap();
        let clock = InversePath::identity(TimeGrid::covering(1.0, 0.01).unwrap());
        assert!(matches!(time_change_pair(&y, &z, &clock), Err(Error::Horizon(_))));
    }

    #[test]
    fn zero_observation_gives_unit_likelihood() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 0.0, 0.5).unwrap();
        let (y, z) = simulate_classical_pair(&model, 1.0, 0.01, 2).unwrap();
        let l = likelihood_path(&model, &y, &z).unwrap();
        assert!(l.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn particle_estimates_normalise() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 1.0, 0.5).unwrap();
        let (_, z) = simulate_classical_pair(&model, 0.5, 0.01, 9).unwrap();
        let one = kallianpur_striebel_estimate(&model, &z, &|_| 1.0, 300, 4).unwrap();
        assert!(one.normalized.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let mean = kallianpur_striebel_estimate(&model, &z, &|x| x[0], 300, 4).unwrap();
        assert_eq!(mean, kallianpur_striebel_estimate(&model, &z, &|x| x[0], 300, 4).unwrap());
        assert!(kallianpur_striebel_estimate(&model, &z, &|x| x[0], 50, 4).is_err());
    }

    #[test]
    fn vector_models_simulate() {
        let model = VectorModel::new(
            1,
            Box::new(|x, o| {
                o[0] = -x[0];
                o[1] = x[0] - x[1];
            }),
            Box::new(|_, o| o.fill(1.0)),
            Box::new(|x, o| o[0] = x[1]),
            vec![InitialLaw::Point(0.0), InitialLaw::Point(1.0)],
        )
        .unwrap();
        let (y, z) = simulate_classical_pair(&model, 1.0, 0.01, 1).unwrap();
        assert_eq!(y.dim(), 2);
        assert_eq!(y.at(0), &[0.0, 1.0]);
        assert_eq!(z.channels(), 1);
        let est = kallianpur_striebel_estimate(&model, &z, &|x| x[1], 200, 2).unwrap();
        assert!(est.normalized.iter().all(|v| v.is_finite()));
    }
}
