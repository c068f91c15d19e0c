//! Filtering-problem descriptions and the grid generator `A` with its adjoint.
//!
//! On a [`SpatialGrid`] the diffusion part of
//!
//! ```text
//! Aφ = ½ a(x) φ'' + b(x) φ' + λ₀ Σ_w p_w [φ(x + G(x, w)) − φ(x)],   a = σ²
//! ```
//!
//! is discretised by central differences, with the end rows closed by a
//! reflecting ghost node so that every row of the matrix sums to zero. The
//! adjoint `A*` is the exact transpose. In the interior the transpose is the
//! divergence-form stencil for `½(a p)'' − (b p)'`, and because the rows of
//! `A` sum to zero the columns of `A*` do too, which makes `Σ (A* p)_j = 0`
//! for every `p`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type MarkFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A labelled coefficient function `ℝ → ℝ`.
#[derive(Clone)]
pub struct Coefficient {
    label: String,
    f: ScalarFn,
}

impl Coefficient {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(label: impl Into<String>, f: F) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    /// `x ↦ a·x`.
    pub fn linear(a: f64) -> Self {
        Self::new(format!("{a}*x"), move |x| a * x)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coefficient({})", self.label)
    }
}

/// Law of the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Gaussian { mean: f64, sd: f64 },
    Point(f64),
}

impl InitialLaw {
    /// Location and scale used to size the computational domain.
    pub fn location_scale(&self) -> (f64, f64) {
        match *self {
            InitialLaw::Gaussian { mean, sd } => (mean, sd),
            InitialLaw::Point(x) => (x, 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            InitialLaw::Point(x) => x,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, .. } => mean,
            InitialLaw::Point(x) => x,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InitialLaw::Gaussian { sd, .. } => sd * sd,
            InitialLaw::Point(_) => 0.0,
        }
    }

    /// Grid density, renormalised so its grid integral is exactly 1. A point
    /// law becomes a hat of mass 1 on the two nodes around it.
    pub fn density_on(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        let n = grid.n_nodes();
        let dx = grid.spacing();
        let mut p = match *self {
            InitialLaw::Gaussian { mean, sd } => {
                if !(sd > 0.0) {
                    return Err(Error::domain(format!("initial standard deviation must be positive, got {sd}")));
                }
                grid.nodes()
                    .iter()
                    .map(|&x| {
                        let z = (x - mean) / sd;
                        (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
                    })
                    .collect::<Vec<_>>()
            }
            InitialLaw::Point(x0) => {
                if x0 < grid.lower() || x0 > grid.upper() {
                    return Err(Error::grid(format!("initial point {x0} lies outside the grid")));
                }
                let mut p = vec![0.0; n];
                let (j, theta) = grid.locate(x0);
                p[j] = (1.0 - theta) / dx;
                p[j + 1] += theta / dx;
                p
            }
        };
        let mass = grid.integrate(&p);
        if !(mass > 0.0) {
            return Err(Error::grid("initial density has no mass on the grid"));
        }
        p.iter_mut().for_each(|v| *v /= mass);
        Ok(p)
    }
}

/// One atom `w` of a finite jump measure with probability `p_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpAtom {
    pub mark: f64,
    pub probability: f64,
}

/// What the jumps act on.
#[derive(Clone)]
pub enum JumpKind {
    /// State jumps `x ↦ x + G(x, w)`.
    State(MarkFn),
    /// Observation jumps with rate multiplier `λ(x, w)` relative to `λ₀ p_w`.
    Observation(MarkFn),
}

impl fmt::Debug for JumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpKind::State(_) => write!(f, "State(G)"),
            JumpKind::Observation(_) => write!(f, "Observation(λ)"),
        }
    }
}

/// Finite-activity jump specification: total rate `λ₀` and atoms `(w, p_w)`,
/// so `ν = λ₀ Σ p_w δ_w`.
#[derive(Debug, Clone)]
pub struct JumpSpec {
    intensity: f64,
    atoms: Vec<JumpAtom>,
    kind: JumpKind,
}

impl JumpSpec {
    pub fn new(intensity: f64, atoms: Vec<JumpAtom>, kind: JumpKind) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::domain(format!("jump intensity must be nonnegative, got {intensity}")));
        }
        if atoms.is_empty() {
            return Err(Error::domain("jump specification needs at least one atom"));
        }
        if atoms.iter().any(|a| !(a.probability >= 0.0) || !a.mark.is_finite()) {
            return Err(Error::domain("atom probabilities must be nonnegative and marks finite"));
        }
        let total: f64 = atoms.iter().map(|a| a.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("atom probabilities must sum to 1, got {total}")));
        }
        Ok(Self { intensity, atoms, kind })
    }

    /// State jumps with map `G`.
    pub fn state<G: Fn(f64, f64) -> f64 + Send + Sync + 'static>(intensity: f64, atoms: Vec<JumpAtom>, g: G) -> Result<Self> {
        Self::new(intensity, atoms, JumpKind::State(Arc::new(g)))
    }

    /// Observation jumps with rate multiplier `λ`.
    pub fn observation<L: Fn(f64, f64) -> f64 + Send + Sync + 'static>(
        intensity: f64,
        atoms: Vec<JumpAtom>,
        lambda: L,
    ) -> Result<Self> {
        Self::new(intensity, atoms, JumpKind::Observation(Arc::new(lambda)))
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn kind(&self) -> &JumpKind {
        &self.kind
    }

    /// `ν({w}) = λ₀ p_w` for each atom.
    pub fn atom_rates(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().map(move |a| (a.mark, self.intensity * a.probability))
    }

    /// Draws a mark from the atom distribution.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.probability;
            if u < acc {
                return a.mark;
            }
        }
        self.atoms.last().expect("atoms are nonempty").mark
    }

    pub fn state_map(&self) -> Option<&MarkFn> {
        match &self.kind {
            JumpKind::State(g) => Some(g),
            JumpKind::Observation(_) => None,
        }
    }

    pub fn rate_multiplier(&self) -> Option<&MarkFn> {
        match &self.kind {
            JumpKind::Observation(l) => Some(l),
            JumpKind::State(_) => None,
        }
    }
}

/// One filtering problem: state `dY = b(Y)dτ + σ(Y)dB`, observation
/// `dZ = h(Y)dτ + dW` (one channel per entry of `observation`), stability
/// index β of the time change, optional jumps and the initial law.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub observation: Vec<Coefficient>,
    pub beta: f64,
    pub jumps: Option<JumpSpec>,
    pub initial: InitialLaw,
}

impl ModelSpec {
    pub fn new(drift: Coefficient, diffusion: Coefficient, observation: Vec<Coefficient>, beta: f64, initial: InitialLaw) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("stability index must lie in (0, 1), got {beta}")));
        }
        Ok(Self { drift, diffusion, observation, beta, jumps: None, initial })
    }

    pub fn with_jumps(mut self, jumps: JumpSpec) -> Self {
        self.jumps = Some(jumps);
        self
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_observation(mut self, observation: Vec<Coefficient>) -> Self {
        self.observation = observation;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("stability index must lie in (0, 1), got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }

    /// `dY = a Y dτ + σ dB`, `dZ = c Y dτ + dW`, `Y_0 ~ N(0, 1)`.
    pub fn ou_linear(a: f64, sigma: f64, c: f64, beta: f64) -> Result<Self> {
        Self::new(
            Coefficient::linear(a),
            Coefficient::constant(sigma),
            vec![Coefficient::linear(c)],
            beta,
            InitialLaw::Gaussian { mean: 0.0, sd: 1.0 },
        )
    }

    /// `dY = tanh(Y) dτ + dB`, `dZ = Y dτ + dW`, `Y_0 ~ N(0, 1)`.
    pub fn benes_like(beta: f64) -> Result<Self> {
        Self::new(
            Coefficient::new("tanh(x)", f64::tanh),
            Coefficient::constant(1.0),
            vec![Coefficient::linear(1.0)],
            beta,
            InitialLaw::Gaussian { mean: 0.0, sd: 1.0 },
        )
    }

    /// OU state with unit-mark observation jumps at base rate 1 and rate
    /// multiplier `λ(x, w) = 1 + ½ tanh(x)`.
    pub fn jump_poisson(beta: f64) -> Result<Self> {
        let jumps = JumpSpec::observation(1.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |x, _| 1.0 + 0.5 * x.tanh())?;
        Ok(Self::ou_linear(-1.0, 2f64.sqrt(), 1.0, beta)?.with_jumps(jumps))
    }

    /// Built-in model by name: `ou-linear`, `benes-like` or `jump-poisson`.
    pub fn builtin(name: &str, beta: f64) -> Result<Self> {
        match name {
            "ou-linear" => Self::ou_linear(-1.0, 2f64.sqrt(), 1.0, beta),
            "benes-like" => Self::benes_like(beta),
            "jump-poisson" => Self::jump_poisson(beta),
            other => Err(Error::domain(format!("unknown model '{other}'"))),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.len()
    }

    /// `|h(x)|²`.
    pub fn observation_norm_sq(&self, x: f64) -> f64 {
        self.observation.iter().map(|h| h.eval(x).powi(2)).sum()
    }

    pub fn state_jumps(&self) -> Option<&JumpSpec> {
        self.jumps.as_ref().filter(|j| matches!(j.kind, JumpKind::State(_)))
    }

    pub fn observation_jumps(&self) -> Option<&JumpSpec> {
        self.jumps.as_ref().filter(|j| matches!(j.kind, JumpKind::Observation(_)))
    }

    /// Checks `σ > 0` at every node and that `b`, `σ`, `h` are finite there.
    pub fn validate_on(&self, grid: &SpatialGrid) -> Result<()> {
        for x in grid.nodes() {
            let s = self.diffusion.eval(x);
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::domain(format!("diffusion must be positive on the grid, got σ({x}) = {s}")));
            }
            if !self.drift.eval(x).is_finite() || self.observation.iter().any(|h| !h.eval(x).is_finite()) {
                return Err(Error::domain(format!("coefficients are not finite at x = {x}")));
            }
        }
        Ok(())
    }
}

/// Sparse row entry of the jump part: `(column, weight)`.
type JumpEntry = (usize, f64);

/// Matrix of the discrete generator `A` on a spatial grid.
///
/// Tridiagonal diffusion part stored by rows (`sub[j] = A_{j,j−1}`,
/// `sup[j] = A_{j,j+1}`), jump part as a list of sparse rows.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    jumps: Option<Vec<Vec<JumpEntry>>>,
}

impl DiscreteGenerator {
    /// Diffusion part only.
    pub fn diffusion(drift: &Coefficient, diffusion: &Coefficient, grid: &SpatialGrid) -> Result<Self> {
        let n = grid.n_nodes();
        if grid.n_cells() < SpatialGrid::MIN_CELLS {
            return Err(Error::grid("grid too small for the generator stencil"));
        }
        let dx = grid.spacing();
        let (mut sub, mut diag, mut sup) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let x = grid.x(j);
            let a = diffusion.eval(x).powi(2);
            let b = drift.eval(x);
            if j == 0 || j == n - 1 {
                // ghost node φ_{−1} = φ_1 (resp. φ_{n} = φ_{n−2}): the first-order
                // term vanishes and the second difference becomes 2(φ_1 − φ_0)
                let off = a / (dx * dx);
                diag[j] = -off;
                if j == 0 {
                    sup[j] = off;
                } else {
                    sub[j] = off;
                }
            } else {
                let d2 = 0.5 * a / (dx * dx);
                let d1 = b / (2.0 * dx);
                sub[j] = d2 - d1;
                diag[j] = -2.0 * d2;
                sup[j] = d2 + d1;
            }
        }
        Ok(Self { sub, diag, sup, jumps: None })
    }

    /// Full generator of `model`, including state jumps when present with
    /// positive intensity.
    pub fn new(model: &ModelSpec, grid: &SpatialGrid) -> Result<Self> {
        let mut gen = Self::diffusion(&model.drift, &model.diffusion, grid)?;
        if let Some(spec) = model.state_jumps() {
            if spec.intensity() > 0.0 {
                gen.jumps = Some(jump_rows(spec, grid));
            }
        }
        Ok(gen)
    }

    pub fn n_nodes(&self) -> usize {
        self.diag.len()
    }

    pub fn has_jumps(&self) -> bool {
        self.jumps.is_some()
    }

    /// Tridiagonal bands `(sub, diag, sup)` of the diffusion part of `A*`.
    pub fn adjoint_bands(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n_nodes();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for j in 0..n {
            if j > 0 {
                sub[j] = self.sup[j - 1];
            }
            if j + 1 < n {
                sup[j] = self.sub[j + 1];
            }
        }
        (sub, self.diag.clone(), sup)
    }

    /// `A φ`.
    pub fn apply(&self, phi: &[f64], out: &mut [f64]) {
        self.apply_diffusion(phi, out);
        if let Some(rows) = &self.jumps {
            for (i, row) in rows.iter().enumerate() {
                out[i] += row.iter().map(|&(c, w)| w * phi[c]).sum::<f64>();
            }
        }
    }

    /// Diffusion part of `A φ`.
    pub fn apply_diffusion(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.n_nodes();
        for j in 0..n {
            let mut v = self.diag[j] * phi[j];
            if j > 0 {
                v += self.sub[j] * phi[j - 1];
            }
            if j + 1 < n {
                v += self.sup[j] * phi[j + 1];
            }
            out[j] = v;
        }
    }

    /// `A* p = Aᵀ p`.
    pub fn apply_adjoint(&self, p: &[f64], out: &mut [f64]) {
        self.apply_adjoint_diffusion(p, out);
        self.add_adjoint_jumps(p, out);
    }

    /// Diffusion part of `A* p`.
    pub fn apply_adjoint_diffusion(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n_nodes();
        for j in 0..n {
            let mut v = self.diag[j] * p[j];
            if j > 0 {
                v += self.sup[j - 1] * p[j - 1];
            }
            if j + 1 < n {
                v += self.sub[j + 1] * p[j + 1];
            }
            out[j] = v;
        }
    }

    /// Adds the jump part of `A* p` to `out`.
    pub fn add_adjoint_jumps(&self, p: &[f64], out: &mut [f64]) {
        if let Some(rows) = &self.jumps {
            for (i, row) in rows.iter().enumerate() {
                for &(c, w) in row {
                    out[c] += w * p[i];
                }
            }
        }
    }
}

/// Rows of `λ₀ Σ_w p_w [φ(x_i + G(x_i, w)) − φ(x_i)]`, with the shifted value
/// taken by linear interpolation clamped to the domain.
fn jump_rows(spec: &JumpSpec, grid: &SpatialGrid) -> Vec<Vec<JumpEntry>> {
    let g = spec.state_map().expect("state jump rows need a jump map");
    (0..grid.n_nodes())
        .map(|i| {
            let x = grid.x(i);
            let mut row: Vec<JumpEntry> = Vec::with_capacity(2 * spec.atoms().len() + 1);
            let mut push = |c: usize, w: f64| {
                if let Some(e) = row.iter_mut().find(|e| e.0 == c) {
                    e.1 += w;
                } else {
                    row.push((c, w));
                }
            };
            for (mark, rate) in spec.atom_rates() {
                let (j, theta) = grid.locate(x + g(x, mark));
                push(j, rate * (1.0 - theta));
                push(j + 1, rate * theta);
                push(i, -rate);
            }
            row
        })
        .collect()
}

/// `A φ` on the grid.
pub fn generator_apply(model: &ModelSpec, grid: &SpatialGrid, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, phi.len())?;
    let gen = DiscreteGenerator::new(model, grid)?;
    let mut out = vec![0.0; phi.len()];
    gen.apply(phi, &mut out);
    Ok(out)
}

/// `A* p` on the grid.
pub fn adjoint_apply(model: &ModelSpec, grid: &SpatialGrid, p: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, p.len())?;
    let gen = DiscreteGenerator::new(model, grid)?;
    let mut out = vec![0.0; p.len()];
    gen.apply_adjoint(p, &mut out);
    Ok(out)
}

fn check_len(grid: &SpatialGrid, len: usize) -> Result<()> {
    if len != grid.n_nodes() {
        return Err(Error::grid(format!("expected {} grid values, got {len}", grid.n_nodes())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou() -> ModelSpec {
        ModelSpec::ou_linear(-1.0, 2f64.sqrt(), 1.0, 0.5).unwrap()
    }

    fn dot(grid: &SpatialGrid, u: &[f64], v: &[f64]) -> f64 {
        let prod: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
        grid.integrate(&prod)
    }

    #[test]
    fn constants_are_annihilated() {
        let grid = SpatialGrid::new(-5.0, 5.0, 200).unwrap();
        let a = generator_apply(&ou(), &grid, &vec![3.0; grid.n_nodes()]).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_diffusion_of_square() {
        let model = ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(1.0), vec![], 0.5, InitialLaw::Point(0.0)).unwrap();
        let grid = SpatialGrid::new(-2.0, 2.0, 400).unwrap();
        let phi: Vec<f64> = grid.nodes().iter().map(|x| x * x).collect();
        let a = generator_apply(&model, &grid, &phi).unwrap();
        for v in &a[1..a.len() - 1] {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ou_generator_of_square() {
        let grid = SpatialGrid::with_spacing(-4.0, 4.0, 1e-2).unwrap();
        let phi: Vec<f64> = grid.nodes().iter().map(|x| x * x).collect();
        let a = generator_apply(&ou(), &grid, &phi).unwrap();
        for (j, aj) in a.iter().enumerate().take(grid.n_cells()).skip(1) {
            let x = grid.x(j);
            assert!((aj - (2.0 - 2.0 * x * x)).abs() < 1e-6);
        }
    }

    #[test]
    fn adjoint_conserves_mass_and_is_the_transpose() {
        let grid = SpatialGrid::new(-6.0, 6.0, 300).unwrap();
        let model = ModelSpec::benes_like(0.5).unwrap();
        let p: Vec<f64> = grid.nodes().iter().map(|x| (-(x - 0.5) * (x - 0.5)).exp() * (1.0 + 0.3 * x.sin())).collect();
        let phi: Vec<f64> = grid.nodes().iter().map(|x| (-x * x / 4.0).exp() * x.cos()).collect();
        let ap = adjoint_apply(&model, &grid, &p).unwrap();
        assert!(grid.integrate(&ap).abs() < 1e-10);
        let lhs = dot(&grid, &generator_apply(&model, &grid, &phi).unwrap(), &p);
        let rhs = dot(&grid, &phi, &ap);
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()));
    }

    #[test]
    fn standard_normal_is_stationary_for_ou() {
        let grid = SpatialGrid::with_spacing(-8.0, 8.0, 1e-2).unwrap();
        let p: Vec<f64> = grid.nodes().iter().map(|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt()).collect();
        let ap = adjoint_apply(&ou(), &grid, &p).unwrap();
        let worst = ap.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn jump_part_is_transposed_and_vanishes_at_zero_rate() {
        let grid = SpatialGrid::new(-5.0, 5.0, 160).unwrap();
        let atoms = vec![JumpAtom { mark: 0.7, probability: 0.4 }, JumpAtom { mark: -1.3, probability: 0.6 }];
        let with = ou().with_jumps(JumpSpec::state(1.5, atoms.clone(), |x, w| w * (1.0 + 0.1 * x.tanh())).unwrap());
        let without = ou().with_jumps(JumpSpec::state(0.0, atoms, |_, w| w).unwrap());
        let p: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
        let phi: Vec<f64> = grid.nodes().iter().map(|x| (-(x - 1.0).powi(2)).exp()).collect();
        let lhs = dot(&grid, &generator_apply(&with, &grid, &phi).unwrap(), &p);
        let rhs = dot(&grid, &phi, &adjoint_apply(&with, &grid, &p).unwrap());
        assert!((lhs - rhs).abs() < 1e-8);
        assert_eq!(generator_apply(&without, &grid, &phi).unwrap(), generator_apply(&ou(), &grid, &phi).unwrap());
        let ap = adjoint_apply(&with, &grid, &p).unwrap();
        assert!(grid.integrate(&ap).abs() < 1e-10);
    }

    #[test]
    fn initial_densities_have_unit_mass() {
        let grid = SpatialGrid::new(-3.0, 3.0, 60).unwrap();
        for law in [InitialLaw::Gaussian { mean: 0.2, sd: 0.5 }, InitialLaw::Point(0.33)] {
            let p = law.density_on(&grid).unwrap();
            assert!((grid.integrate(&p) - 1.0).abs() < 1e-12);
        }
        assert!(InitialLaw::Point(9.0).density_on(&grid).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ModelSpec::builtin("nope", 0.5).is_err());
        assert!(ModelSpec::builtin("ou-linear", 1.0).is_err());
        assert!(JumpSpec::state(-1.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |_, w| w).is_err());
        assert!(JumpSpec::state(1.0, vec![JumpAtom { mark: 1.0, probability: 0.5 }], |_, w| w).is_err());
        let zero_sigma = ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), vec![], 0.5, InitialLaw::Point(0.0)).unwrap();
        assert!(zero_sigma.validate_on(&SpatialGrid::new(0.0, 1.0, 10).unwrap()).is_err());
    }
}
