//! Riemann–Liouville fractional integral `J^β` and derivative
//! `𝒟^{1−β} = d/dt ∘ J^β` on uniform grids.
//!
//! `J^β` uses product integration against the piecewise-linear interpolant
//! of the samples:
//!
//! ```text
//! (J^β f)(t_k) ≈ h^β/Γ(β+2) · [ a_{0,k} f_0 + Σ_{j=1}^{k−1} a_{k−j} f_j + f_k ]
//! a_{0,k} = (k−1)^{β+1} − (k−1−β) k^β
//! a_m     = (m+1)^{β+1} − 2 m^{β+1} + (m−1)^{β+1}
//! ```
//!
//! The rule is exact for piecewise-linear `f` and reduces to the trapezoid
//! rule at β = 1.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Samples `f(t_k)`, `t_k = k · step`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    step: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::domain(format!("grid step must be positive, got {step}")));
        }
        if values.is_empty() {
            return Err(Error::grid("grid function needs at least one sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid function samples must be finite"));
        }
        Ok(Self { step, values })
    }

    /// Samples `f` at `len` nodes.
    pub fn sample<F: Fn(f64) -> f64>(step: f64, len: usize, f: F) -> Result<Self> {
        Self::new(step, (0..len).map(|k| f(k as f64 * step)).collect())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }
}

/// Product-integration weights for `J^β` on a grid with fixed step.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    beta: f64,
    scale: f64,
    interior: Vec<f64>,
}

impl ProductWeights {
    /// Weights for grids of up to `max_nodes` nodes.
    pub fn new(beta: f64, step: f64, max_nodes: usize) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("fractional order must lie in (0, 1], got {beta}")));
        }
        if !(step > 0.0) {
            return Err(Error::domain(format!("grid step must be positive, got {step}")));
        }
        let p = beta + 1.0;
        let interior = (0..max_nodes.max(2))
            .map(|m| {
                if m == 0 {
                    0.0
                } else {
                    let mf = m as f64;
                    (mf + 1.0).powf(p) - 2.0 * mf.powf(p) + (mf - 1.0).powf(p)
                }
            })
            .collect();
        Ok(Self { beta, scale: step.powf(beta) / gamma(beta + 2.0), interior })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Weight of the current node `f_k` in `(J^β f)(t_k)`, k ≥ 1.
    pub fn current(&self) -> f64 {
        self.scale
    }

    /// Weight of `f_j` in `(J^β f)(t_k)` for `j < k`.
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        debug_assert!(j < k);
        if j == 0 {
            let kf = k as f64;
            self.scale * ((kf - 1.0).powf(self.beta + 1.0) - (kf - 1.0 - self.beta) * kf.powf(self.beta))
        } else {
            self.scale * self.interior[k - j]
        }
    }

    /// `(J^β f)(t_k)` from the samples `f_0..=f_k`.
    pub fn apply_at(&self, values: &[f64], k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let mut acc = self.weight(0, k) * values[0];
        for (j, v) in values.iter().enumerate().take(k).skip(1) {
            acc += self.scale * self.interior[k - j] * v;
        }
        acc + self.scale * values[k]
    }
}

fn check_order(beta: f64, allow_one: bool) -> Result<()> {
    let ok = beta > 0.0 && (beta < 1.0 || (allow_one && beta == 1.0));
    if ok {
        Ok(())
    } else if allow_one {
        Err(Error::domain(format!("fractional order must lie in (0, 1], got {beta}")))
    } else {
        Err(Error::domain(format!("fractional order must lie in (0, 1), got {beta}")))
    }
}

/// `J^β f` at every node; `(J^β f)(0) = 0`.
pub fn fractional_integral(f: &GridFunction, beta: f64) -> Result<GridFunction> {
    check_order(beta, true)?;
    let weights = ProductWeights::new(beta, f.step, f.len())?;
    let values = (0..f.len()).map(|k| weights.apply_at(&f.values, k)).collect();
    Ok(GridFunction { step: f.step, values })
}

/// `𝒟^{1−β} f = d/dt J^β f`: central differences of `J^β f` inside, one-sided
/// differences at the two ends.
pub fn riemann_liouville_derivative(f: &GridFunction, beta: f64) -> Result<GridFunction> {
    check_order(beta, false)?;
    if f.len() < 2 {
        return Err(Error::grid("derivative needs at least two samples"));
    }
    let integral = fractional_integral(f, beta)?;
    Ok(GridFunction { step: f.step, values: difference(&integral.values, f.step) })
}

fn difference(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| match k {
            0 => (values[1] - values[0]) / h,
            k if k == n - 1 => (values[k] - values[k - 1]) / h,
            k => (values[k + 1] - values[k - 1]) / (2.0 * h),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_integrates_to_power() {
        let f = GridFunction::sample(1e-3, 1001, |_| 1.0).unwrap();
        let j = fractional_integral(&f, 0.5).unwrap();
        assert!((j.values()[1000] - 2.0 / PI.sqrt()).abs() < 1e-4);
        // the rule is exact on constants at every node
        for (k, v) in j.values().iter().enumerate() {
            let t = f.time(k);
            assert!((v - t.sqrt() / gamma(1.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn order_one_is_trapezoid() {
        let f = GridFunction::sample(1e-3, 1001, |t| t).unwrap();
        let j = fractional_integral(&f, 1.0).unwrap();
        assert!((j.values()[1000] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_orders() {
        let f = GridFunction::sample(0.1, 4, |t| t).unwrap();
        assert!(fractional_integral(&f, 0.0).is_err());
        assert!(fractional_integral(&f, 1.2).is_err());
        assert!(riemann_liouville_derivative(&f, 1.0).is_err());
        assert!(GridFunction::new(0.1, vec![f64::NAN]).is_err());
        assert!(GridFunction::new(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn derivative_of_power_is_constant() {
        let beta = 0.5;
        let f = GridFunction::sample(1e-3, 1001, |t| t.powf(1.0 - beta)).unwrap();
        let d = riemann_liouville_derivative(&f, beta).unwrap();
        let target = gamma(2.0 - beta);
        // the kink of t^{1/2} at the origin is only resolved away from the first nodes
        for k in 10..=1000 {
            assert!((d.values()[k] - target).abs() < 1e-2, "k={k}: {}", d.values()[k]);
        }
    }

    #[test]
    fn derivative_near_order_zero_is_identity() {
        let f = GridFunction::sample(1e-3, 2001, f64::sin).unwrap();
        let d = riemann_liouville_derivative(&f, 0.999).unwrap();
        for k in 1..2001 {
            assert!((d.values()[k] - f.values()[k]).abs() < 1e-2, "k={k}");
        }
    }

    #[test]
    fn semigroup_property() {
        let f = GridFunction::sample(1e-3, 1001, |t| t * t + t.sin()).unwrap();
        let composed = fractional_integral(&fractional_integral(&f, 0.3).unwrap(), 0.4).unwrap();
        let direct = fractional_integral(&f, 0.7).unwrap();
        for k in (100..=1000).step_by(100) {
            let rel = (composed.values()[k] - direct.values()[k]).abs() / direct.values()[k].abs();
            assert!(rel < 1e-3, "k={k} rel={rel}");
        }
    }

    #[test]
    fn derivative_inverts_integral() {
        let beta = 0.4;
        let f = GridFunction::sample(1e-3, 1001, |t| t.sin() + t * t).unwrap();
        let back = riemann_liouville_derivative(&fractional_integral(&f, 1.0 - beta).unwrap(), beta).unwrap();
        for k in (50..=1000).step_by(50) {
            let rel = (back.values()[k] - f.values()[k]).abs() / f.values()[k].abs();
            assert!(rel < 1e-2, "k={k} rel={rel}");
        }
    }

    proptest! {
        #[test]
        fn derivative_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, beta in 0.05f64..0.95) {
            let f = GridFunction::sample(0.01, 101, |t| t.cos()).unwrap();
            let g = GridFunction::sample(0.01, 101, |t| t * t * t).unwrap();
            let combo = GridFunction::new(0.01, f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let lhs = riemann_liouville_derivative(&combo, beta).unwrap();
            let df = riemann_liouville_derivative(&f, beta).unwrap();
            let dg = riemann_liouville_derivative(&g, beta).unwrap();
            for k in 0..101 {
                let rhs = a * df.values()[k] + b * dg.values()[k];
                prop_assert!((lhs.values()[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn weights_are_nonnegative(beta in 0.01f64..1.0, k in 1usize..400) {
            let w = ProductWeights::new(beta, 0.01, k + 1).unwrap();
            for j in 0..k {
                prop_assert!(w.weight(j, k) >= 0.0);
            }
        }
    }
}
