//! Uniform time and space grids.

use crate::error::{Error, Result};

/// Uniform time grid `0, step, 2·step, …, (len-1)·step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    step: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::domain(format!("time step must be positive, got {step}")));
        }
        if len < 1 {
            return Err(Error::grid("time grid needs at least one node"));
        }
        Ok(Self { step, len })
    }

    /// Grid covering `[0, horizon]` with the given step; the number of steps
    /// is rounded to the nearest integer so `horizon` lands on a node.
    pub fn covering(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::domain(format!("time step must be positive, got {step}")));
        }
        let steps = (horizon / step).round().max(1.0) as usize;
        Self::new(step, steps + 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn steps(&self) -> usize {
        self.len - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.time(k))
    }

    /// Index of the node nearest to `t`, if `t` lies on the grid within a
    /// relative tolerance.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.step).round();
        if k < 0.0 || k as usize >= self.len {
            return None;
        }
        ((k * self.step - t).abs() <= 1e-9 * self.step.max(t.abs())).then_some(k as usize)
    }

    /// Every `factor`-th node of this grid.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::grid(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        Self::new(self.step * factor as f64, self.steps() / factor + 1)
    }
}

/// Linear interpolation of `values` sampled on `grid` at time `t`.
/// Returns `None` outside `[0, horizon]`.
pub(crate) fn interpolate(grid: &TimeGrid, values: &[f64], t: f64) -> Option<f64> {
    let horizon = grid.horizon();
    if t < 0.0 || t > horizon * (1.0 + 1e-12) + 1e-300 {
        return None;
    }
    let pos = (t / grid.step()).min(grid.steps() as f64);
    let i = (pos.floor() as usize).min(grid.steps().saturating_sub(1));
    if grid.steps() == 0 {
        return Some(values[0]);
    }
    let nearest = pos.round();
    if (pos - nearest).abs() <= 1e-12 * nearest.max(1.0) {
        // on a node up to rounding: return the sample itself
        return Some(values[nearest as usize]);
    }
    let theta = pos - i as f64;
    Some(values[i] + theta * (values[i + 1] - values[i]))
}

/// Uniform 1D spatial grid with `n_cells + 1` nodes on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    lower: f64,
    upper: f64,
    n_cells: usize,
}

impl SpatialGrid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(lower: f64, upper: f64, n_cells: usize) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::grid(format!("need lower < upper, got [{lower}, {upper}]")));
        }
        if n_cells < Self::MIN_CELLS {
            return Err(Error::grid(format!("need at least {} cells, got {n_cells}", Self::MIN_CELLS)));
        }
        Ok(Self { lower, upper, n_cells })
    }

    /// Grid with (approximately) the requested spacing.
    pub fn with_spacing(lower: f64, upper: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::grid(format!("spacing must be positive, got {spacing}")));
        }
        let n = ((upper - lower) / spacing).round() as usize;
        Self::new(lower, upper, n)
    }

    /// Truncated domain `[μ − 8s, μ + 8s]` around an initial law of location
    /// μ and scale s.
    pub fn around(location: f64, scale: f64, spacing: f64) -> Result<Self> {
        Self::with_spacing(location - 8.0 * scale, location + 8.0 * scale, spacing)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.n_cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.lower + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| self.x(j)).collect()
    }

    /// Grid integral Σ v_j · spacing.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        crate::quadrature::pairwise_sum(values) * self.spacing()
    }

    /// L1 distance Σ |u_j − v_j| · spacing.
    pub fn l1_distance(&self, u: &[f64], v: &[f64]) -> f64 {
        let diffs: Vec<f64> = u.iter().zip(v).map(|(a, b)| (a - b).abs()).collect();
        self.integrate(&diffs)
    }

    /// Value at `x` by linear interpolation, clamped to the domain.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (j, theta) = self.locate(x);
        values[j] * (1.0 - theta) + values[j + 1] * theta
    }

    /// Cell index and fractional offset of `x`, clamped to the domain.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let pos = ((x - self.lower) / self.spacing()).clamp(0.0, self.n_cells as f64);
        let j = (pos.floor() as usize).min(self.n_cells - 1);
        (j, pos - j as f64)
    }
}
