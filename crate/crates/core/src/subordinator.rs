//! β-stable subordinators `D_τ`, their inverses `T_t = min{τ : D_τ ≥ t}`,
//! the one-sided stable density `f_{D_1}` and the inverse-subordinator
//! density `g_t(τ)`.
//!
//! `D` is normalised by `E[e^{−s D_τ}] = e^{−τ s^β}`, which gives
//! `D_{cτ} = c^{1/β} D_τ` in law and
//! `g_t(τ) = t / (β τ^{1+1/β}) · f_{D_1}(t τ^{−1/β})`.

use std::f64::consts::PI;

use rand::Rng;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::grid::{interpolate, TimeGrid};
use crate::quadrature::{gl16, pairwise_sum};
use crate::rng::{open_unit, stream, Purpose};

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("stability index must lie in (0, 1), got {beta}")))
    }
}

/// One draw of `D_1` (Kanter's form of the Chambers–Mallows–Stuck
/// transformation for totally skewed positive stable laws), evaluated in log
/// space so small β does not overflow `sin(u)^{−1/β}`.
pub fn sample_standard_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = PI * open_unit(rng);
    let w = -open_unit(rng).ln();
    let ln_x = (beta * u).sin().ln() - u.sin().ln() / beta
        + (1.0 - beta) / beta * (((1.0 - beta) * u).sin().ln() - w.ln());
    ln_x.exp()
}

/// Discretised subordinator path on the operational grid `τ_i = i · step`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath {
    beta: f64,
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SubordinatorPath {
    /// Builds a path from explicit values; they must start at 0 and be
    /// strictly increasing.
    pub fn from_values(beta: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("stability index must lie in (0, 1], got {beta}")));
        }
        let grid = TimeGrid::new(step, values.len())?;
        if values[0] != 0.0 {
            return Err(Error::domain("subordinator path must start at 0"));
        }
        if values.windows(2).any(|w| w[1] <= w[0] || !w[1].is_finite()) {
            return Err(Error::domain("subordinator path must be strictly increasing and finite"));
        }
        Ok(Self { beta, grid, values })
    }

    /// The deterministic path `D_τ = τ`; its inverse is the identity clock.
    pub fn unit_slope(horizon: f64, step: f64) -> Result<Self> {
        let grid = TimeGrid::covering(horizon, step)?;
        let values = grid.times().collect();
        Ok(Self { beta: 1.0, grid, values })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Operational horizon `τ_N`.
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Terminal value `D_{τ_N}`.
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path is never empty")
    }
}

/// Appends `steps` increments to `values`, each `step^{1/β}·D_1`.
fn extend_path<R: Rng + ?Sized>(values: &mut Vec<f64>, beta: f64, step: f64, steps: usize, rng: &mut R) {
    let scale = step.powf(1.0 / beta);
    let mut last = *values.last().expect("path starts at 0");
    for _ in 0..steps {
        let mut next = last + scale * sample_standard_stable(beta, rng);
        // an increment can underflow for tiny steps; keep the path strictly increasing
        if next <= last {
            next = last.next_up();
        }
        values.push(next);
        last = next;
    }
}

/// Samples `D` on `[0, horizon]` with increments over `step`.
pub fn sample_stable_path(beta: f64, horizon: f64, step: f64, seed: u64) -> Result<SubordinatorPath> {
    sample_stable_path_indexed(beta, horizon, step, seed, 0)
}

/// Like [`sample_stable_path`] for ensemble member `index`.
pub fn sample_stable_path_indexed(beta: f64, horizon: f64, step: f64, seed: u64, index: u64) -> Result<SubordinatorPath> {
    check_beta(beta)?;
    let grid = TimeGrid::covering(horizon, step)?;
    let mut rng = stream(seed, index, Purpose::Subordinator);
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    extend_path(&mut values, beta, step, grid.steps(), &mut rng);
    Ok(SubordinatorPath { beta, grid, values })
}

/// Samples `D` far enough that it exceeds `level`, doubling the operational
/// horizon until it does. Extensions continue the same random stream, so the
/// result equals a single draw with the final horizon.
pub fn sample_covering_path(beta: f64, level: f64, step: f64, seed: u64, index: u64) -> Result<SubordinatorPath> {
    check_beta(beta)?;
    if !(level > 0.0) {
        return Err(Error::domain(format!("level must be positive, got {level}")));
    }
    if !(step > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {step}")));
    }
    let mut rng = stream(seed, index, Purpose::Subordinator);
    let guess = (2.0 * level.powf(beta) / gamma(1.0 + beta) / step).ceil().max(16.0) as usize;
    let mut values = Vec::with_capacity(guess + 1);
    values.push(0.0);
    extend_path(&mut values, beta, step, guess, &mut rng);
    while *values.last().unwrap() < level {
        let more = values.len() - 1;
        extend_path(&mut values, beta, step, more, &mut rng);
    }
    let grid = TimeGrid::new(step, values.len())?;
    Ok(SubordinatorPath { beta, grid, values })
}

/// Inverse subordinator `T` on a uniform real-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InversePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl InversePath {
    /// Validates `T_0 = 0` and monotonicity.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::grid("inverse path length does not match its grid"));
        }
        if values[0] != 0.0 {
            return Err(Error::domain("inverse path must start at 0"));
        }
        if values.windows(2).any(|w| w[1] < w[0] || !w[1].is_finite()) {
            return Err(Error::domain("inverse path must be nondecreasing and finite"));
        }
        Ok(Self { grid, values })
    }

    /// The identity clock `T_t = t`.
    pub fn identity(grid: TimeGrid) -> Self {
        Self { grid, values: grid.times().collect() }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.grid, &self.values, t)
    }

    /// Largest operational time reached.
    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("path is never empty")
    }

    /// Increment `T_{t_{k+1}} − T_{t_k}`.
    pub fn increment(&self, k: usize) -> f64 {
        self.values[k + 1] - self.values[k]
    }
}

/// `T_t = min{τ : D_τ ≥ t}` with `D` linearly interpolated between
/// operational nodes, which keeps `T` continuous.
pub fn invert_path(path: &SubordinatorPath, real_grid: &TimeGrid) -> Result<InversePath> {
    let needed = real_grid.horizon();
    if path.terminal() < needed {
        return Err(Error::Horizon(format!(
            "subordinator reaches {} but real time {} was requested; resample with a longer horizon",
            path.terminal(),
            needed
        )));
    }
    let d = &path.values;
    let h = path.grid.step();
    let mut values = Vec::with_capacity(real_grid.len());
    let mut i = 0usize;
    for t in real_grid.times() {
        while d[i] < t {
            i += 1;
        }
        let tau = if i == 0 {
            0.0
        } else {
            let lo = d[i - 1];
            let frac = ((t - lo) / (d[i] - lo)).clamp(0.0, 1.0);
            h * ((i - 1) as f64 + frac)
        };
        values.push(tau);
    }
    // rounding in the interpolation cannot be allowed to break monotonicity
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    Ok(InversePath { grid: *real_grid, values })
}

/// Samples an inverse-subordinator path on `real_grid` for ensemble member `index`.
pub fn sample_inverse_path(beta: f64, real_grid: &TimeGrid, step: f64, seed: u64, index: u64) -> Result<InversePath> {
    let path = sample_covering_path(beta, real_grid.horizon(), step, seed, index)?;
    invert_path(&path, real_grid)
}

/// `E[T_t] = t^β / Γ(1+β)`.
pub fn inverse_mean(beta: f64, t: f64) -> f64 {
    t.powf(beta) / gamma(1.0 + beta)
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

/// `ln A(v)` for Zolotarev's kernel
/// `A(v) = [sin(βv)/sin v]^{1/(1−β)} · sin((1−β)v)/sin(βv)`, increasing on (0, π).
fn ln_kernel(beta: f64, v: f64) -> f64 {
    let sb = (beta * v).sin().ln();
    (sb - v.sin().ln()) / (1.0 - beta) + ((1.0 - beta) * v).sin().ln() - sb
}

fn ln_kernel_derivative(beta: f64, v: f64) -> f64 {
    let cot = |x: f64| x.cos() / x.sin();
    (beta * cot(beta * v) - cot(v)) / (1.0 - beta) + (1.0 - beta) * cot((1.0 - beta) * v) - beta * cot(beta * v)
}

/// Integrates `kernel(z(v))` over (0, π) with `z(v) = ln A(v) + shift`, using
/// 16-point Gauss–Legendre panels graded geometrically around the point
/// where `z = 0` (the peak of `e^{z − e^z}` and the edge of `e^{−e^z}`).
fn integrate_over_kernel<F: Fn(f64) -> f64>(beta: f64, shift: f64, kernel: F) -> f64 {
    const V_MIN: f64 = 1e-300;
    let z = |v: f64| ln_kernel(beta, v) + shift;
    let eps = 1e-12;
    let centre = if z(eps) >= 0.0 {
        0.0
    } else if z(PI - eps) <= 0.0 {
        PI
    } else {
        let (mut lo, mut hi) = (eps, PI - eps);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if z(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let slope = if centre > 1e-6 && centre < PI - 1e-9 { ln_kernel_derivative(beta, centre) } else { 0.0 };
    let width = if slope > 0.0 { (1.0 / slope).min(PI) } else { PI / 8.0 };

    let mut breaks = vec![0.0, PI, centre];
    let mut k = width;
    while k < PI {
        breaks.push((centre - k).clamp(0.0, PI));
        breaks.push((centre + k).clamp(0.0, PI));
        k *= 2.0;
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let rule = gl16();
    let integrand = |v: f64| {
        let v = v.clamp(V_MIN, PI - 1e-16);
        let zv = z(v);
        if zv.is_nan() {
            // A(v) diverges as v → π; the kernels vanish there
            0.0
        } else {
            kernel(zv)
        }
    };
    let parts: Vec<f64> = breaks.windows(2).filter(|w| w[1] > w[0]).map(|w| rule.integrate_composite(w[0], w[1], 2, integrand)).collect();
    pairwise_sum(&parts)
}

/// `x^{−β}` below this uses the convergent power series in place of the integral.
const SERIES_THRESHOLD: f64 = 0.5;
const SERIES_TERMS: usize = 120;

/// `f_{D_1}(u) = (1/π) Σ_{k≥1} (−1)^{k+1} Γ(kβ+1)/k! · sin(kπβ) · u^{−kβ−1}`.
fn density_series(beta: f64, u: f64) -> f64 {
    let ln_u = u.ln();
    let mut terms = Vec::with_capacity(SERIES_TERMS);
    for k in 1..=SERIES_TERMS {
        let kf = k as f64;
        let magnitude = (ln_gamma(kf * beta + 1.0) - ln_gamma(kf + 1.0) - (kf * beta + 1.0) * ln_u).exp();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        terms.push(sign * magnitude * (kf * PI * beta).sin());
        if magnitude < 1e-18 * terms[0].abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    pairwise_sum(&terms) / PI
}

/// `P(D_1 > u) = (1/π) Σ_{k≥1} (−1)^{k+1} Γ(kβ)/k! · sin(kπβ) · u^{−kβ}`.
fn tail_series(beta: f64, u: f64) -> f64 {
    let ln_u = u.ln();
    let mut terms = Vec::with_capacity(SERIES_TERMS);
    for k in 1..=SERIES_TERMS {
        let kf = k as f64;
        let magnitude = (ln_gamma(kf * beta) - ln_gamma(kf + 1.0) - kf * beta * ln_u).exp();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        terms.push(sign * magnitude * (kf * PI * beta).sin());
        if magnitude < 1e-18 * terms[0].abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    pairwise_sum(&terms) / PI
}

/// Exponent of the small-u asymptotic `f_{D_1}(u) ~ C·exp(−(1−β)(u/β)^{−β/(1−β)})`.
fn small_u_exponent(beta: f64, u: f64) -> f64 {
    -(1.0 - beta) * (u / beta).powf(-beta / (1.0 - beta))
}

fn underflows(beta: f64, u: f64) -> bool {
    small_u_exponent(beta, u) < f64::MIN_POSITIVE.ln()
}

/// Density `f_{D_1}(u)` of the standard one-sided β-stable law.
///
/// For moderate `u` this is Zolotarev's single-integral representation
/// `f(u) = β/((1−β)π u) ∫_0^π A(v) u^{−β/(1−β)} exp(−A(v) u^{−β/(1−β)}) dv`;
/// for large `u` the power series is used. Returns 0 where the small-u decay
/// falls below the smallest normal float.
pub fn stable_density(beta: f64, u: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(u > 0.0) || u.is_nan() {
        return Err(Error::domain(format!("stable density needs u > 0, got {u}")));
    }
    Ok(stable_density_unchecked(beta, u))
}

pub(crate) fn stable_density_unchecked(beta: f64, u: f64) -> f64 {
    if u.is_infinite() {
        return 0.0;
    }
    if underflows(beta, u) {
        return 0.0;
    }
    if u.powf(-beta) <= SERIES_THRESHOLD {
        return density_series(beta, u).max(0.0);
    }
    let shift = -beta / (1.0 - beta) * u.ln();
    let integral = integrate_over_kernel(beta, shift, |z| if z > 700.0 { 0.0 } else { (z - z.exp()).exp() });
    (beta / ((1.0 - beta) * PI * u) * integral).max(0.0)
}

/// Distribution function `P(D_1 ≤ u) = (1/π) ∫_0^π exp(−A(v) u^{−β/(1−β)}) dv`.
pub fn stable_cdf(beta: f64, u: f64) -> Result<f64> {
    check_beta(beta)?;
    if u.is_nan() {
        return Err(Error::domain("stable cdf at NaN"));
    }
    Ok(stable_cdf_unchecked(beta, u))
}

pub(crate) fn stable_cdf_unchecked(beta: f64, u: f64) -> f64 {
    if u <= 0.0 || underflows(beta, u) {
        return 0.0;
    }
    if u.is_infinite() {
        return 1.0;
    }
    if u.powf(-beta) <= SERIES_THRESHOLD {
        return (1.0 - tail_series(beta, u)).clamp(0.0, 1.0);
    }
    let shift = -beta / (1.0 - beta) * u.ln();
    let integral = integrate_over_kernel(beta, shift, |z| if z > 700.0 { 0.0 } else { (-z.exp()).exp() });
    (integral / PI).clamp(0.0, 1.0)
}

/// Arguments of `g_t(τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityQuery {
    beta: f64,
    t: f64,
    tau: f64,
}

impl DensityQuery {
    pub fn new(beta: f64, t: f64, tau: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("real time must be positive, got {t}")));
        }
        if !(tau >= 0.0) {
            return Err(Error::domain(format!("operational time must be nonnegative, got {tau}")));
        }
        Ok(Self { beta, t, tau })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// `g_t(τ)`, the density of `T_t`; at τ = 0 the limit `t^{−β}/Γ(1−β)`.
pub fn inverse_density(q: DensityQuery) -> f64 {
    inverse_density_unchecked(q.beta, q.t, q.tau)
}

pub(crate) fn inverse_density_unchecked(beta: f64, t: f64, tau: f64) -> f64 {
    let limit = t.powf(-beta) / gamma(1.0 - beta);
    if tau == 0.0 {
        return limit;
    }
    let u = t * tau.powf(-1.0 / beta);
    if !u.is_finite() {
        return limit;
    }
    let prefactor = t / (beta * tau.powf(1.0 + 1.0 / beta));
    if !prefactor.is_finite() {
        return limit;
    }
    prefactor * stable_density_unchecked(beta, u)
}

/// `P(T_t > τ) = P(D_1 < t τ^{−1/β})`.
pub fn inverse_tail(beta: f64, t: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    stable_cdf_unchecked(beta, t * tau.powf(-1.0 / beta))
}

/// Smallest operational time (found by doubling then bisection) with
/// `P(T_t > τ) ≤ tol`.
pub fn operational_horizon(beta: f64, t: f64, tol: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("real time must be positive, got {t}")));
    }
    let mut hi = inverse_mean(beta, t).max(1e-12);
    let mut guard = 0;
    while inverse_tail(beta, t, hi) > tol {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numerical("operational horizon search did not terminate".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inverse_tail(beta, t, mid) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `∫_0^∞ g_t(τ) dτ`, truncated where the tail probability drops below 1e-13.
pub fn inverse_density_mass(beta: f64, t: f64) -> Result<f64> {
    let tau_max = operational_horizon(beta, t, 1e-13)?;
    Ok(gl16().integrate_composite(0.0, tau_max, 48, |tau| inverse_density_unchecked(beta, t, tau)))
}

/// `(J^β_t g_·(τ))(t) = t^β/Γ(1+β) ∫_0^1 g_{t(1−w^{1/β})}(τ) dw`, the fractional
/// integral in the real-time variable, after the substitution that removes
/// the kernel singularity.
///
/// The integrand switches on steeply near `s = τ^{1/β}`, so panels are
/// graded geometrically toward the corresponding `w`.
pub fn fractional_integral_in_t(beta: f64, t: f64, tau: f64) -> f64 {
    let integrand = |w: f64| {
        let s = t * (1.0 - w.powf(1.0 / beta));
        if s <= 0.0 {
            0.0
        } else {
            inverse_density_unchecked(beta, s, tau)
        }
    };
    let s_star = tau.powf(1.0 / beta).min(t);
    let w_star = (1.0 - s_star / t).powf(beta);
    let mut breaks = vec![0.0, 1.0, w_star];
    let mut d = (1.0 - w_star).max(1e-12) / 64.0;
    while d < 1.0 {
        breaks.push((w_star - d).max(0.0));
        breaks.push((w_star + d).min(1.0));
        d *= 2.0;
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breaks"));
    breaks.dedup();
    let rule = gl16();
    let parts: Vec<f64> = breaks.windows(2).map(|p| rule.integrate_composite(p[0], p[1], 2, integrand)).collect();
    t.powf(beta) / gamma(1.0 + beta) * pairwise_sum(&parts)
}

/// `g_t(τ) + ∂_τ J^β_t g_t(τ)`, which vanishes for τ > 0. The τ-derivative
/// is a fourth-order central difference with step `delta`.
pub fn fractional_relation_residual(beta: f64, t: f64, tau: f64, delta: f64) -> Result<f64> {
    DensityQuery::new(beta, t, tau)?;
    if tau - 2.0 * delta <= 0.0 {
        return Err(Error::domain("fractional relation is checked at interior τ only"));
    }
    let h = |x: f64| fractional_integral_in_t(beta, t, x);
    let derivative = (-h(tau + 2.0 * delta) + 8.0 * h(tau + delta) - 8.0 * h(tau - delta) + h(tau - 2.0 * delta)) / (12.0 * delta);
    Ok(inverse_density_unchecked(beta, t, tau) + derivative)
}

/// `∫_0^∞ e^{−st} g_t(τ) dt` by quadrature.
///
/// The substitution `t = v^{1/(1−β)}` removes the `t^{−β}` endpoint
/// singularity at τ = 0. Truncation uses the large-t behaviour
/// `g_t(τ) ≈ t^{−β}/Γ(1−β)` (valid once `τ t^{−β}` is small), whose tail
/// beyond `L` is bounded by `e^{−sL} L^{−β}/(s Γ(1−β))`; `L` is grown until
/// that bound is below 1e-12.
pub fn laplace_transform_in_t(beta: f64, tau: f64, s: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(s > 0.0) {
        return Err(Error::domain(format!("Laplace variable must be positive, got {s}")));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("operational time must be nonnegative, got {tau}")));
    }
    let g1mb = gamma(1.0 - beta);
    let mut horizon = (tau.max(1e-3)).powf(1.0 / beta) * 10.0_f64.powf(1.0 / beta);
    horizon = horizon.max(1.0 / s);
    while (-s * horizon).exp() * horizon.powf(-beta) / (s * g1mb) > 1e-12 {
        horizon *= 1.5;
    }
    let exponent = 1.0 / (1.0 - beta);
    let v_max = horizon.powf(1.0 - beta);
    let jacobian_power = beta / (1.0 - beta);
    let value = gl16().integrate_composite(0.0, v_max, 96, |v| {
        if v <= 0.0 {
            // t^{−β}·v^{β/(1−β)} → 1 at the origin
            return if tau == 0.0 { exponent / g1mb } else { 0.0 };
        }
        let t = v.powf(exponent);
        (-s * t).exp() * inverse_density_unchecked(beta, t, tau) * v.powf(jacobian_power) * exponent
    });
    Ok(value)
}

/// Max over `s_grid` of `|∫_0^∞ e^{−st} g_t(τ) dt − s^{β−1} e^{−τ s^β}|`.
pub fn laplace_identity_residual(beta: f64, tau: f64, s_grid: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &s in s_grid {
        let numeric = laplace_transform_in_t(beta, tau, s)?;
        let target = s.powf(beta - 1.0) * (-tau * s.powf(beta)).exp();
        worst = worst.max((numeric - target).abs());
    }
    Ok(worst)
}
