//! Classical adjoint Zakai equation on a 1D grid and the Kalman–Bucy filter.
//!
//! Each step applies a Crank–Nicolson step of `∂U = A*U` followed by the
//! multiplicative observation update
//! `U ← U · exp(Σ_k h_k(x) ΔZ_k − ½ |h(x)|² Δt)` (Lie splitting).

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, TimeGrid};
use crate::models::{DiscreteGenerator, ModelSpec};
use crate::quadrature::pairwise_sum;
use crate::sde_sim::ObservationRecord;

/// Unnormalised filter density `U(t_k, x_j)` on recorded time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDensityGrid {
    grid: SpatialGrid,
    times: TimeGrid,
    values: Vec<f64>,
    clamped_mass: f64,
}

impl FilterDensityGrid {
    pub(crate) fn from_parts(grid: SpatialGrid, times: TimeGrid, values: Vec<f64>, clamped_mass: f64) -> Self {
        debug_assert_eq!(values.len(), times.len() * grid.n_nodes());
        Self { grid, times, values, clamped_mass }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Times at which snapshots were recorded.
    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    /// Snapshot at recorded node `k`.
    pub fn snapshot(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    /// Total mass removed by clamping negative undershoots to zero.
    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    /// Grid integral `∫ U(t_k, x) dx`.
    pub fn mass(&self, k: usize) -> f64 {
        self.grid.integrate(self.snapshot(k))
    }

    /// `U(t, ·)` by linear interpolation between recorded snapshots.
    pub fn at_time(&self, t: f64) -> Result<Vec<f64>> {
        let h = self.times.horizon();
        if !(t >= 0.0) || t > h * (1.0 + 1e-12) {
            return Err(Error::Horizon(format!("time {t} lies outside the solved range [0, {h}]")));
        }
        let pos = (t / self.times.step()).min(self.times.steps() as f64);
        let nearest = pos.round();
        if (pos - nearest).abs() <= 1e-12 * nearest.max(1.0) {
            return Ok(self.snapshot(nearest as usize).to_vec());
        }
        let i = (pos.floor() as usize).min(self.times.steps() - 1);
        let theta = pos - i as f64;
        Ok(self.snapshot(i).iter().zip(self.snapshot(i + 1)).map(|(a, b)| a + theta * (b - a)).collect())
    }
}

/// Thomas algorithm for `sub[j] u_{j−1} + diag[j] u_j + sup[j] u_{j+1} = rhs[j]`.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::Numerical("singular tridiagonal system at row 0".into()));
    }
    scratch[0] = sup[0] / denom;
    rhs[0] /= denom;
    for j in 1..n {
        denom = diag[j] - sub[j] * scratch[j - 1];
        if denom.abs() < 1e-300 || !denom.is_finite() {
            return Err(Error::Numerical(format!("singular tridiagonal system at row {j} (pivot {denom})")));
        }
        scratch[j] = if j + 1 < n { sup[j] / denom } else { 0.0 };
        rhs[j] = (rhs[j] - sub[j] * rhs[j - 1]) / denom;
    }
    for j in (0..n - 1).rev() {
        rhs[j] -= scratch[j] * rhs[j + 1];
    }
    Ok(())
}

/// Sets negative entries to zero and returns the removed mass.
pub(crate) fn clamp_negative(values: &mut [f64], dx: f64) -> f64 {
    let mut removed = 0.0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            removed -= *v;
            *v = 0.0;
        }
    }
    removed * dx
}

/// Per-node observation factor `exp(Σ_k h_k ΔZ_k − ½|h|² Δτ)`.
pub(crate) fn observation_factor(h: &[Vec<f64>], dz: &[f64], dtau: f64, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let mut e = 0.0;
        for (c, hc) in h.iter().enumerate() {
            e += hc[j] * dz[c] - 0.5 * hc[j] * hc[j] * dtau;
        }
        *o = e.exp();
    }
}

/// `h_k` at every grid node, one vector per channel.
pub(crate) fn observation_on_grid(model: &ModelSpec, grid: &SpatialGrid) -> Vec<Vec<f64>> {
    model.observation.iter().map(|h| grid.nodes().iter().map(|&x| h.eval(x)).collect()).collect()
}

/// Solves the adjoint Zakai equation driven by `obs`, recording every step.
pub fn solve_zakai(model: &ModelSpec, grid: &SpatialGrid, obs: &ObservationRecord) -> Result<FilterDensityGrid> {
    solve_zakai_recorded(model, grid, obs, 1)
}

/// As [`solve_zakai`], keeping every `record_every`-th snapshot.
pub fn solve_zakai_recorded(model: &ModelSpec, grid: &SpatialGrid, obs: &ObservationRecord, record_every: usize) -> Result<FilterDensityGrid> {
    if model.jumps.is_some() {
        return Err(Error::domain("the classical solver takes models without jumps"));
    }
    if obs.channels() != model.obs_dim() {
        return Err(Error::grid(format!("model has {} observation channels, record has {}", model.obs_dim(), obs.channels())));
    }
    model.validate_on(grid)?;
    let times = obs.grid().coarsen(record_every)?;
    let dt = obs.grid().step();
    let n = grid.n_nodes();
    let dx = grid.spacing();
    let gen = DiscreteGenerator::new(model, grid)?;
    let (s, d, u) = gen.adjoint_bands();
    let lhs_sub: Vec<f64> = s.iter().map(|v| -0.5 * dt * v).collect();
    let lhs_diag: Vec<f64> = d.iter().map(|v| 1.0 - 0.5 * dt * v).collect();
    let lhs_sup: Vec<f64> = u.iter().map(|v| -0.5 * dt * v).collect();
    let h = observation_on_grid(model, grid);

    let mut cur = model.initial.density_on(grid)?;
    let mut values = Vec::with_capacity(times.len() * n);
    values.extend_from_slice(&cur);
    let mut work = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut factor = vec![0.0; n];
    let mut clamped = 0.0;
    for k in 0..obs.grid().steps() {
        gen.apply_adjoint(&cur, &mut work);
        for j in 0..n {
            work[j] = cur[j] + 0.5 * dt * work[j];
        }
        solve_tridiagonal(&lhs_sub, &lhs_diag, &lhs_sup, &mut work, &mut scratch)
            .map_err(|e| Error::Numerical(format!("Crank–Nicolson step {k}: {e}")))?;
        clamped += clamp_negative(&mut work, dx);
        observation_factor(&h, obs.increment(k), dt, &mut factor);
        for j in 0..n {
            cur[j] = work[j] * factor[j];
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite density after step {k}")));
        }
        if (k + 1) % record_every == 0 {
            values.extend_from_slice(&cur);
        }
    }
    Ok(FilterDensityGrid::from_parts(*grid, times, values, clamped))
}

/// Normalised density at recorded time `t` and the normaliser `∫ U dx`.
pub fn normalize(u: &FilterDensityGrid, t: f64) -> Result<(Vec<f64>, f64)> {
    let k = u.times().node_of(t).ok_or_else(|| Error::grid(format!("time {t} is not a recorded node")))?;
    normalize_values(u.grid(), u.snapshot(k))
}

/// Normalises grid values by their integral.
pub fn normalize_values(grid: &SpatialGrid, values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mass = grid.integrate(values);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::Numerical(format!("cannot normalise a density of mass {mass}")));
    }
    Ok((values.iter().map(|v| v / mass).collect(), mass))
}

/// Mass, mean and variance of grid values (mean and variance normalised).
pub fn moments(grid: &SpatialGrid, values: &[f64]) -> (f64, f64, f64) {
    let xs = grid.nodes();
    let mass = grid.integrate(values);
    let m1 = pairwise_sum(&values.iter().zip(&xs).map(|(v, x)| v * x).collect::<Vec<_>>()) * grid.spacing() / mass;
    let m2 = pairwise_sum(&values.iter().zip(&xs).map(|(v, x)| v * (x - m1) * (x - m1)).collect::<Vec<_>>()) * grid.spacing() / mass;
    (mass, m1, m2)
}

/// Kalman–Bucy mean and variance paths on the observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanBucyPath {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Kalman–Bucy filter for `dY = aY dt + σ dB`, `dZ = cY dt + dW`,
/// `Y_0 ~ N(m0, p0)`. The Riccati equation `P' = 2aP + σ² − c²P²` is
/// integrated by RK4, the mean by Euler with the left-point gain.
pub fn kalman_bucy_reference(a: f64, sigma: f64, c: f64, m0: f64, p0: f64, obs: &ObservationRecord) -> Result<KalmanBucyPath> {
    if obs.channels() != 1 {
        return Err(Error::grid("the Kalman–Bucy reference takes a single observation channel"));
    }
    if !(p0 >= 0.0) {
        return Err(Error::domain(format!("initial variance must be nonnegative, got {p0}")));
    }
    let grid = *obs.grid();
    let dt = grid.step();
    let riccati = |p: f64| 2.0 * a * p + sigma * sigma - c * c * p * p;
    let mut mean = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    let (mut m, mut p) = (m0, p0);
    mean.push(m);
    variance.push(p);
    for k in 0..grid.steps() {
        let dz = obs.increment(k)[0];
        let m_next = m + a * m * dt + p * c * (dz - c * m * dt);
        let k1 = riccati(p);
        let k2 = riccati(p + 0.5 * dt * k1);
        let k3 = riccati(p + 0.5 * dt * k2);
        let k4 = riccati(p + dt * k3);
        p += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        m = m_next;
        mean.push(m);
        variance.push(p);
    }
    Ok(KalmanBucyPath { grid, mean, variance })
}

/// Sup over nodes of the posterior mean and variance errors of `u` against
/// the Kalman–Bucy reference (both on the same time grid).
pub fn kalman_bucy_sup_error(u: &FilterDensityGrid, reference: &KalmanBucyPath) -> Result<(f64, f64)> {
    let mut worst = (0.0_f64, 0.0_f64);
    for (k, t) in u.times().times().enumerate() {
        let r = reference.grid.node_of(t).ok_or_else(|| Error::grid("reference does not cover the filter times"))?;
        let (_, mean, var) = moments(u.grid(), u.snapshot(k));
        worst.0 = worst.0.max((mean - reference.mean[r]).abs());
        worst.1 = worst.1.max((var - reference.variance[r]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Coefficient, InitialLaw};
    use crate::sde_sim::simulate_classical_pair;
    use std::f64::consts::PI;

    #[test]
    fn thomas_solves_a_known_system() {
        let sub = [0.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0];
        let sup = [1.0, 1.0, 0.0];
        let mut rhs = [5.0, 6.0, 5.0];
        let mut scratch = [0.0; 3];
        solve_tridiagonal(&sub, &diag, &sup, &mut rhs, &mut scratch).unwrap();
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let mut rhs = [1.0, 1.0, 1.0];
        assert!(solve_tridiagonal(&sub, &[0.0, 1.0, 1.0], &sup, &mut rhs, &mut scratch).is_err());
    }

    #[test]
    fn fokker_planck_relaxes_to_the_stationary_law() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 0.0, 0.5)
            .unwrap()
            .with_initial(InitialLaw::Gaussian { mean: 0.0, sd: 2.0 });
        let grid = SpatialGrid::around(0.0, 2.0, 0.02).unwrap();
        let obs = ObservationRecord::from_increments(TimeGrid::covering(10.0, 1e-3).unwrap(), 1, &vec![0.0; 10_000]).unwrap();
        let u = solve_zakai_recorded(&model, &grid, &obs, 1000).unwrap();
        let last = u.times().len() - 1;
        let target: Vec<f64> = grid.nodes().iter().map(|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt()).collect();
        assert!(grid.l1_distance(u.snapshot(last), &target) < 1e-2);
        for k in 0..u.times().len() {
            assert!((u.mass(k) - 1.0).abs() < 1e-8 * (1.0 + u.times().time(k)));
        }
    }

    #[test]
    fn normalisation_properties() {
        let grid = SpatialGrid::new(-1.0, 1.0, 20).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|x| 2.0 + x).collect();
        let (p, mass) = normalize_values(&grid, &v).unwrap();
        assert!((grid.integrate(&p) - 1.0).abs() < 1e-12);
        assert!(mass > 0.0);
        let scaled: Vec<f64> = v.iter().map(|x| 7.5 * x).collect();
        let (q, _) = normalize_values(&grid, &scaled).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut spike = vec![0.0; grid.n_nodes()];
        spike[5] = 3.0;
        let (s, _) = normalize_values(&grid, &spike).unwrap();
        assert!((s[5] - 1.0 / grid.spacing()).abs() < 1e-12);
        assert!(normalize_values(&grid, &vec![0.0; grid.n_nodes()]).is_err());
    }

    #[test]
    fn riccati_limits() {
        let zero = |n: usize, dt: f64| ObservationRecord::from_increments(TimeGrid::new(dt, n + 1).unwrap(), 1, &vec![0.0; n]).unwrap();
        let kb = kalman_bucy_reference(0.0, 1.0, 1.0, 0.0, 3.0, &zero(10_000, 1e-3)).unwrap();
        assert!((kb.variance.last().unwrap() - 1.0).abs() < 1e-4);
        let kb = kalman_bucy_reference(-1.0, 2f64.sqrt(), 0.0, 0.0, 0.0, &zero(10_000, 1e-3)).unwrap();
        let t = 10.0_f64;
        assert!((kb.variance.last().unwrap() - (1.0 - (-2.0 * t).exp())).abs() < 1e-10);
        let kb = kalman_bucy_reference(0.0, 0.0, 1.0, 0.7, 0.0, &zero(100, 1e-2)).unwrap();
        assert!(kb.variance.iter().all(|p| *p == 0.0));
        assert!(kb.mean.iter().all(|m| *m == 0.7));
    }

    #[test]
    fn linear_model_tracks_kalman_bucy() {
        let model = ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 1.0, 0.5).unwrap();
        let (_, z) = simulate_classical_pair(&model, 2.0, 1e-3, 17).unwrap();
        let grid = SpatialGrid::around(0.0, 1.0, 0.02).unwrap();
        let u = solve_zakai_recorded(&model, &grid, &z, 10).unwrap();
        let kb = kalman_bucy_reference(-1.0, 2f64.sqrt(), 1.0, 0.0, 1.0, &z).unwrap();
        let (em, ev) = kalman_bucy_sup_error(&u, &kb).unwrap();
        assert!(em < 5e-2 && ev < 5e-2, "{em} {ev}");
        assert!(u.snapshot(u.times().len() - 1).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn jump_models_are_rejected() {
        let model = ModelSpec::jump_poisson(0.5).unwrap();
        let grid = SpatialGrid::new(-4.0, 4.0, 40).unwrap();
        let obs = ObservationRecord::from_increments(TimeGrid::new(0.1, 3).unwrap(), 1, &[0.0, 0.0]).unwrap();
        assert!(solve_zakai(&model, &grid, &obs).is_err());
        let zero_sigma = ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), vec![], 0.5, InitialLaw::Point(0.0)).unwrap();
        let obs = ObservationRecord::from_increments(TimeGrid::new(0.1, 3).unwrap(), 0, &[]).unwrap();
        assert!(solve_zakai(&zero_sigma, &grid, &obs).is_err());
    }
}
