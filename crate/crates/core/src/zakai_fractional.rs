//! Fractional Zakai equation in integral form,
//!
//! ```text
//! Φ(t) = p0 + J^β(A*Φ)(t) + Σ_k ∫_0^t h_k Φ(s) dV_k(s),   V = Z∘T,
//! ```
//!
//! and the subordination representation `∫_0^∞ g_t(τ) U(τ, ·) dτ` it is
//! checked against.
//!
//! The memory term uses the product-integration weights of
//! [`crate::fraccalc`] applied to the stored history of `A*Φ`. The weight on
//! the current node multiplies `A*Φ(t_k)` itself; its diffusion part is taken
//! implicitly (one tridiagonal solve per step) and its jump part by a
//! fixed-point iteration, so the step size is not tied to the spacing.
//!
//! The observation integral is a left-point sum whose increments are
//! `Φ(t_i) · (exp(Σ_k h_k ΔV_k − ½|h|² ΔT) − 1)` rather than `Φ(t_i) h ΔV`:
//! both have the same Itô limit, but the exponential form cannot push a
//! single step below `−Φ(t_i)` when the clock makes a large jump.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fraccalc::ProductWeights;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::models::{DiscreteGenerator, ModelSpec};
use crate::quadrature::{pairwise_sum, GaussLegendre};
use crate::sde_sim::{simulate_classical_pair_covering, ObservationRecord};
use crate::subordinator::{inverse_density_unchecked, inverse_tail, sample_inverse_path, InversePath};
use crate::zakai_classical::{clamp_negative, observation_on_grid, solve_tridiagonal, FilterDensityGrid};

/// Default bound on the number of real-time steps (the history buffer holds
/// one grid vector per step).
pub const DEFAULT_MAX_STEPS: usize = 4000;

/// Tail probability of `T_t` beyond the last operational snapshot that the
/// subordination quadrature tolerates.
pub const SUBORDINATION_TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOptions {
    pub max_steps: usize,
    /// Keep every `record_every`-th snapshot.
    pub record_every: usize,
}

impl Default for FractionalOptions {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, record_every: 1 }
    }
}

/// Solution `Φ(t_k, x_j)` on the real-time grid of its clock.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalFilterGrid {
    density: FilterDensityGrid,
    beta: f64,
    clock: InversePath,
    dv: Vec<f64>,
}

impl FractionalFilterGrid {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn clock(&self) -> &InversePath {
        &self.clock
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.density.grid()
    }

    /// Recorded real times.
    pub fn times(&self) -> &TimeGrid {
        self.density.times()
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        self.density.snapshot(k)
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.density.mass(k)
    }

    pub fn clamped_mass(&self) -> f64 {
        self.density.clamped_mass()
    }

    /// `Φ` at a recorded real time.
    pub fn at_time(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.times().node_of(t).ok_or_else(|| Error::grid(format!("time {t} is not a recorded node")))?;
        Ok(self.snapshot(k).to_vec())
    }

    /// Observation increments `ΔV` used at every real step (all channels).
    pub fn observation_increments(&self) -> &[f64] {
        &self.dv
    }

    /// Snapshots as a classical density grid over real time.
    pub fn as_density_grid(&self) -> &FilterDensityGrid {
        &self.density
    }
}

/// Solves the fractional Zakai equation for the clock `T` and the classical
/// observation path `Z` given on the operational grid.
pub fn solve_fractional_zakai(model: &ModelSpec, grid: &SpatialGrid, clock: &InversePath, obs_operational: &ObservationRecord) -> Result<FractionalFilterGrid> {
    solve_fractional_zakai_with(model, grid, clock, obs_operational, FractionalOptions::default())
}

pub fn solve_fractional_zakai_with(
    model: &ModelSpec,
    grid: &SpatialGrid,
    clock: &InversePath,
    obs_operational: &ObservationRecord,
    options: FractionalOptions,
) -> Result<FractionalFilterGrid> {
    if model.observation_jumps().is_some() {
        return Err(Error::domain("observation jumps are handled by the particle filter, not the grid solver"));
    }
    model.validate_on(grid)?;
    let gen = DiscreteGenerator::new(model, grid)?;
    solve_with_generator(model, &gen, grid, clock, obs_operational, options)
}

pub(crate) fn solve_with_generator(
    model: &ModelSpec,
    gen: &DiscreteGenerator,
    grid: &SpatialGrid,
    clock: &InversePath,
    obs_operational: &ObservationRecord,
    options: FractionalOptions,
) -> Result<FractionalFilterGrid> {
    if obs_operational.channels() != model.obs_dim() {
        return Err(Error::grid(format!(
            "model has {} observation channels, record has {}",
            model.obs_dim(),
            obs_operational.channels()
        )));
    }
    let real = *clock.grid();
    let steps = real.steps();
    if steps > options.max_steps {
        return Err(Error::grid(format!(
            "{steps} real-time steps exceed the history limit of {}; raise max_steps or coarsen the step",
            options.max_steps
        )));
    }
    let times = real.coarsen(options.record_every.max(1))?;
    let v = obs_operational.compose(clock)?;
    let dv = v.increments().to_vec();
    let m = v.channels();
    let n = grid.n_nodes();
    let dx = grid.spacing();
    let h = observation_on_grid(model, grid);

    let weights = ProductWeights::new(model.beta, real.step(), steps + 1)?;
    let c0 = weights.current();
    let (s, d, u) = gen.adjoint_bands();
    let lhs_sub: Vec<f64> = s.iter().map(|x| -c0 * x).collect();
    let lhs_diag: Vec<f64> = d.iter().map(|x| 1.0 - c0 * x).collect();
    let lhs_sup: Vec<f64> = u.iter().map(|x| -c0 * x).collect();

    let p0 = model.initial.density_on(grid)?;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut first = vec![0.0; n];
    gen.apply_adjoint(&p0, &mut first);
    history.push(first);

    let mut values = Vec::with_capacity(times.len() * n);
    values.extend_from_slice(&p0);
    let mut obs_sum = vec![0.0; n];
    let mut prev = p0.clone();
    let mut rhs = vec![0.0; n];
    let mut sol = vec![0.0; n];
    let mut jump = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut clamped = 0.0;

    for k in 1..=steps {
        let inc = &dv[(k - 1) * m..k * m];
        let dtau = clock.increment(k - 1);
        if dtau != 0.0 || inc.iter().any(|d| *d != 0.0) {
            for j in 0..n {
                let mut e = 0.0;
                for (c, hc) in h.iter().enumerate() {
                    e += hc[j] * inc[c] - 0.5 * hc[j] * hc[j] * dtau;
                }
                obs_sum[j] += prev[j] * e.exp_m1();
            }
        }
        for j in 0..n {
            rhs[j] = p0[j] + obs_sum[j];
        }
        for (i, hist) in history.iter().enumerate() {
            let w = weights.weight(i, k);
            for j in 0..n {
                rhs[j] += w * hist[j];
            }
        }

        sol.copy_from_slice(&rhs);
        solve_tridiagonal(&lhs_sub, &lhs_diag, &lhs_sup, &mut sol, &mut scratch)
            .map_err(|e| Error::Numerical(format!("implicit step {k}: {e}")))?;
        if gen.has_jumps() {
            // Φ = (I − c0 A*_diff)^{-1} (rhs + c0 A*_jump Φ), a contraction for c0 λ₀ < 1
            let mut converged = false;
            for _ in 0..100 {
                jump.fill(0.0);
                gen.add_adjoint_jumps(&sol, &mut jump);
                let mut next: Vec<f64> = rhs.iter().zip(&jump).map(|(r, q)| r + c0 * q).collect();
                solve_tridiagonal(&lhs_sub, &lhs_diag, &lhs_sup, &mut next, &mut scratch)?;
                let change = next.iter().zip(&sol).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
                let scale = next.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
                sol = next;
                if change <= 1e-14 * scale.max(1e-300) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numerical(format!("jump fixed point did not converge at step {k}")));
            }
        }
        clamped += clamp_negative(&mut sol, dx);
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite density after step {k}")));
        }
        let mut a_star = vec![0.0; n];
        gen.apply_adjoint(&sol, &mut a_star);
        history.push(a_star);
        if k % options.record_every.max(1) == 0 {
            values.extend_from_slice(&sol);
        }
        prev.copy_from_slice(&sol);
    }
    Ok(FractionalFilterGrid {
        density: FilterDensityGrid::from_parts(*grid, times, values, clamped),
        beta: model.beta,
        clock: clock.clone(),
        dv,
    })
}

/// `∫_0^∞ g_t(τ) U(τ, ·) dτ` with `U` interpolated linearly between its
/// recorded operational-time snapshots. The weight of each snapshot is the
/// integral of `g_t` against its hat function (4-point Gauss–Legendre per
/// interval). Fails if `P(T_t > τ_max)` exceeds [`SUBORDINATION_TAIL_TOL`].
pub fn subordinate_quadrature(beta: f64, t: f64, u: &FilterDensityGrid) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("stability index must lie in (0, 1), got {beta}")));
    }
    if !(t > 0.0) {
        return Err(Error::domain(format!("real time must be positive, got {t}")));
    }
    let times = u.times();
    let tail = inverse_tail(beta, t, times.horizon());
    if tail > SUBORDINATION_TAIL_TOL {
        return Err(Error::Horizon(format!(
            "P(T_t > {}) = {tail:.3e} exceeds {SUBORDINATION_TAIL_TOL:e}; solve to a longer operational horizon",
            times.horizon()
        )));
    }
    let weights = hat_weights(beta, t, times);
    let n = u.grid().n_nodes();
    let mut out = vec![0.0; n];
    let mut column = vec![0.0; weights.len()];
    for (j, o) in out.iter_mut().enumerate() {
        for (k, c) in column.iter_mut().enumerate() {
            *c = weights[k] * u.snapshot(k)[j];
        }
        *o = pairwise_sum(&column);
    }
    Ok(out)
}

/// `∫ g_t(τ) φ_k(τ) dτ` for the hat functions `φ_k` of a uniform grid.
pub fn hat_weights(beta: f64, t: f64, times: &TimeGrid) -> Vec<f64> {
    let rule = GaussLegendre::new(4);
    let h = times.step();
    let mut w = vec![0.0; times.len()];
    for k in 0..times.steps() {
        let (a, b) = (times.time(k), times.time(k + 1));
        w[k] += rule.integrate(a, b, |tau| inverse_density_unchecked(beta, t, tau) * (b - tau) / h);
        w[k + 1] += rule.integrate(a, b, |tau| inverse_density_unchecked(beta, t, tau) * (tau - a) / h);
    }
    w
}

/// Node-wise average of equally sized ensemble members, summed in order.
pub fn ensemble_average(members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| Error::domain("empty ensemble"))?;
    if members.iter().any(|m| m.len() != first.len()) {
        return Err(Error::grid("ensemble members differ in length"));
    }
    let count = members.len() as f64;
    let mut column = vec![0.0; members.len()];
    Ok((0..first.len())
        .map(|j| {
            for (c, m) in column.iter_mut().zip(members) {
                *c = m[j];
            }
            pairwise_sum(&column) / count
        })
        .collect())
}

/// Average of `Φ(t_end, ·)` over `n_paths` independent clocks (and
/// observation paths), one fractional solve per member. Member `i` uses the
/// streams `(seed, i)`.
pub fn fractional_ensemble(
    model: &ModelSpec,
    grid: &SpatialGrid,
    real_grid: &TimeGrid,
    operational_step: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_paths == 0 {
        return Err(Error::domain("ensemble needs at least one member"));
    }
    model.validate_on(grid)?;
    let gen = DiscreteGenerator::new(model, grid)?;
    let options = FractionalOptions { max_steps: DEFAULT_MAX_STEPS.max(real_grid.steps()), record_every: real_grid.steps() };
    let members: Vec<Result<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let clock = sample_inverse_path(model.beta, real_grid, operational_step, seed, i)?;
            let (_, z) = simulate_classical_pair_covering(model, clock.max_value(), operational_step, seed, i)?;
            let phi = solve_with_generator(model, &gen, grid, &clock, &z, options)?;
            Ok(phi.snapshot(phi.times().len() - 1).to_vec())
        })
        .collect();
    let members: Vec<Vec<f64>> = members.into_iter().collect::<Result<_>>()?;
    ensemble_average(&members)
}

/// One row of the pathwise comparison of `Φ(t, ·)` with `U(T_t, ·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub t: f64,
    pub operational_time: f64,
    pub l1: f64,
    pub sup: f64,
}

/// L1 and sup distances between `Φ(t, ·)` and `U(T_t, ·)` at each checkpoint,
/// with `U` interpolated linearly in operational time.
pub fn pathwise_oracle_report(phi: &FractionalFilterGrid, u: &FilterDensityGrid, clock: &InversePath, checkpoints: &[f64]) -> Result<Vec<OracleRow>> {
    if phi.grid() != u.grid() {
        return Err(Error::grid("Φ and U live on different spatial grids"));
    }
    let grid = phi.grid();
    checkpoints
        .iter()
        .map(|&t| {
            let tau = clock.value_at(t).ok_or_else(|| Error::Horizon(format!("checkpoint {t} lies beyond the clock")))?;
            let a = phi.at_time(t)?;
            let b = u.at_time(tau)?;
            let sup = a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            Ok(OracleRow { t, operational_time: tau, l1: grid.l1_distance(&a, &b), sup })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Coefficient, InitialLaw};
    use crate::sde_sim::simulate_classical_pair;
    use crate::zakai_classical::{solve_zakai, solve_zakai_recorded};

    fn zero_obs(grid: TimeGrid) -> ObservationRecord {
        ObservationRecord::from_increments(grid, 1, &vec![0.0; grid.steps()]).unwrap()
    }

    #[test]
    fn frozen_generator_keeps_the_initial_density() {
        let model = ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), vec![Coefficient::constant(0.0)], 0.5, InitialLaw::Gaussian { mean: 0.0, sd: 1.0 }).unwrap();
        let grid = SpatialGrid::around(0.0, 1.0, 0.1).unwrap();
        let gen = DiscreteGenerator::diffusion(&model.drift, &model.diffusion, &grid).unwrap();
        let clock = InversePath::identity(TimeGrid::covering(1.0, 0.01).unwrap());
        let phi = solve_with_generator(&model, &gen, &grid, &clock, &zero_obs(*clock.grid()), FractionalOptions::default()).unwrap();
        let p0 = model.initial.density_on(&grid).unwrap();
        for k in 0..phi.times().len() {
            assert_eq!(phi.snapshot(k), &p0[..]);
        }
    }

    #[test]
    fn fractional_fokker_planck_conserves_mass() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 0.0, 0.5).unwrap().with_initial(InitialLaw::Gaussian { mean: 1.0, sd: 0.5 });
        let grid = SpatialGrid::around(1.0, 0.5, 0.02).unwrap();
        let clock = InversePath::identity(TimeGrid::covering(1.0, 0.01).unwrap());
        let phi = solve_fractional_zakai(&model, &grid, &clock, &zero_obs(*clock.grid())).unwrap();
        for k in 0..phi.times().len() {
            assert!((phi.mass(k) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn history_limit_is_enforced() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5).unwrap();
        let grid = SpatialGrid::around(0.0, 1.0, 0.1).unwrap();
        let clock = InversePath::identity(TimeGrid::covering(1.0, 0.01).unwrap());
        let options = FractionalOptions { max_steps: 50, record_every: 1 };
        let r = solve_fractional_zakai_with(&model, &grid, &clock, &zero_obs(*clock.grid()), options);
        assert!(matches!(r, Err(Error::Grid(_))));
        let short = zero_obs(TimeGrid::covering(0.5, 0.01).unwrap());
        assert!(matches!(solve_fractional_zakai(&model, &grid, &clock, &short), Err(Error::Horizon(_))));
    }

    #[test]
    fn classical_limit_matches_the_classical_solver() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 1.0, 0.999).unwrap();
        let grid = SpatialGrid::around(0.0, 1.0, 0.05).unwrap();
        let (_, z) = simulate_classical_pair(&model, 1.0, 2e-3, 8).unwrap();
        let clock = InversePath::identity(*z.grid());
        let phi = solve_fractional_zakai(&model, &grid, &clock, &z).unwrap();
        let u = solve_zakai(&model, &grid, &z).unwrap();
        let rows = pathwise_oracle_report(&phi, &u, &clock, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(rows[0].l1, 0.0);
        for r in rows {
            assert!(r.l1 < 5e-2, "{r:?}");
        }
    }

    #[test]
    fn flat_clock_stops_the_observation_term() {
        let model = ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5).unwrap();
        let grid = SpatialGrid::around(0.0, 1.0, 0.1).unwrap();
        let real = TimeGrid::covering(1.0, 0.01).unwrap();
        let values: Vec<f64> = real.times().map(|t| if t < 0.3 { t } else if t < 0.6 { 0.3 } else { t - 0.3 }).collect();
        let clock = InversePath::from_values(real, values).unwrap();
        let (_, z) = simulate_classical_pair(&model, 1.0, 0.01, 4).unwrap();
        let phi = solve_fractional_zakai(&model, &grid, &clock, &z).unwrap();
        for k in 0..real.steps() {
            if clock.increment(k) == 0.0 {
                assert_eq!(phi.observation_increments()[k], 0.0);
            }
        }
    }

    #[test]
    fn subordination_tends_to_the_initial_density() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 0.0, 0.5).unwrap().with_initial(InitialLaw::Gaussian { mean: 1.0, sd: 0.5 });
        let grid = SpatialGrid::around(1.0, 0.5, 0.02).unwrap();
        let z = zero_obs(TimeGrid::covering(0.3, 1e-5).unwrap());
        let u = solve_zakai_recorded(&model, &grid, &z, 1).unwrap();
        let p0 = model.initial.density_on(&grid).unwrap();
        // T_t has mean of order t^β, so the distance shrinks like t^{1/2} here
        let mut last = f64::INFINITY;
        for t in [1e-3, 1e-5, 1e-7] {
            let sub = subordinate_quadrature(0.5, t, &u).unwrap();
            assert!((grid.integrate(&sub) - 1.0).abs() < 1e-6);
            let d = grid.l1_distance(&sub, &p0);
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-2, "{last}");
        assert!(matches!(subordinate_quadrature(0.5, 1.0, &u), Err(Error::Horizon(_))));
    }

    #[test]
    fn ensemble_average_is_ordered_and_checked() {
        let avg = ensemble_average(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(avg, vec![2.0, 3.0]);
        assert!(ensemble_average(&[]).is_err());
        assert!(ensemble_average(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
