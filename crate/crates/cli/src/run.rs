//! Dispatch from a validated config to the library.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use fraczakai::levy_ext::{fractional_filter_jump_obs, simulate_jump_observation, TestFunction};
use fraczakai::sde_sim::{
    kallianpur_striebel_estimate, simulate_classical_pair, simulate_classical_pair_covering, simulate_time_changed_state_direct, time_change_pair,
};
use fraczakai::subordinator::{inverse_density_mass, inverse_tail, operational_horizon, sample_inverse_path};
use fraczakai::zakai_classical::{kalman_bucy_reference, kalman_bucy_sup_error, moments, solve_zakai};
use fraczakai::zakai_fractional::{
    fractional_ensemble, pathwise_oracle_report, solve_fractional_zakai_with, subordinate_quadrature, FractionalOptions, DEFAULT_MAX_STEPS,
};
use fraczakai::{Coefficient, DensityQuery, InitialLaw, InversePath, ModelSpec, ObservationRecord, SpatialGrid, TimeGrid};

use crate::config::{ExperimentConfig, RunKind};
use crate::output::{fmt_float, write_text_table, CheckFlag, Summary};

/// Why a run could not finish.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
        }
    }
}

impl From<fraczakai::Error> for RunError {
    fn from(e: fraczakai::Error) -> Self {
        match e {
            fraczakai::Error::Domain(_) | fraczakai::Error::Grid(_) => RunError::Config(e.to_string()),
            fraczakai::Error::Horizon(_) | fraczakai::Error::Numerical(_) => RunError::Numerical(e.to_string()),
        }
    }
}

/// Runs the experiment, writing its tables and `summary.txt` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, RunError> {
    fs::create_dir_all(out)?;
    let model = cfg.model_spec()?;
    let mut s = Summary::default();
    s.set("run", cfg.run.name());
    s.set("model", cfg.model_label());
    s.value("beta", cfg.beta);
    s.set("seed", cfg.seed);
    s.value("horizon", cfg.horizon);
    s.value("step", cfg.step);
    s.value("operational_step", cfg.operational_step);
    match cfg.run {
        RunKind::Density => density(cfg, out, &mut s)?,
        RunKind::Simulate => simulate(cfg, &model, out, &mut s)?,
        RunKind::Zakai => zakai(cfg, &model, out, &mut s)?,
        RunKind::FracZakai => frac_zakai(cfg, &model, out, &mut s)?,
        RunKind::Oracle => oracle(cfg, &model, out, &mut s)?,
        RunKind::Subordinate => subordinate(cfg, &model, out, &mut s)?,
        RunKind::JumpFilter => jump_filter(cfg, &model, out, &mut s)?,
        RunKind::Benchmark => benchmark(cfg, &model, out, &mut s)?,
    }
    let path = s.write(out)?;
    s.files.push(path);
    Ok(s)
}

fn spatial_grid(cfg: &ExperimentConfig, model: &ModelSpec, s: &mut Summary) -> Result<SpatialGrid, RunError> {
    let grid = match cfg.grid_bounds {
        Some((lo, hi)) => SpatialGrid::with_spacing(lo, hi, cfg.grid_spacing)?,
        None => {
            let (loc, scale) = model.initial.location_scale();
            SpatialGrid::around(loc, scale.max(1.0), cfg.grid_spacing)?
        }
    };
    s.value("grid.lower", grid.lower());
    s.value("grid.upper", grid.upper());
    s.value("grid.spacing", grid.spacing());
    Ok(grid)
}

fn tolerance(cfg: &ExperimentConfig, default: f64) -> f64 {
    cfg.tolerance.unwrap_or(default)
}

/// Density snapshots at the checkpoints, one column each.
fn snapshot_rows<F: Fn(f64) -> fraczakai::Result<Vec<f64>>>(grid: &SpatialGrid, checkpoints: &[f64], at: F) -> Result<Vec<Vec<f64>>, RunError> {
    let snaps: Vec<Vec<f64>> = checkpoints.iter().map(|&t| at(t)).collect::<fraczakai::Result<_>>()?;
    Ok((0..grid.n_nodes()).map(|j| std::iter::once(grid.x(j)).chain(snaps.iter().map(|v| v[j])).collect()).collect())
}

fn snapshot_columns(checkpoints: &[f64]) -> Vec<String> {
    std::iter::once("x".to_string()).chain(checkpoints.iter().map(|t| format!("t={t}"))).collect()
}

fn density(cfg: &ExperimentConfig, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    let times: Vec<f64> = cfg.checkpoints.iter().copied().filter(|t| *t > 0.0).collect();
    if times.is_empty() {
        return Err(RunError::Config("density needs a positive checkpoint".into()));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let tau_max = operational_horizon(cfg.beta, t_max, 1e-6)?;
    let closed = cfg.beta == 0.5;
    let mut rows = Vec::new();
    let (mut worst, mut peak) = (0.0_f64, 0.0_f64);
    let mut mass_err = 0.0_f64;
    for &t in &times {
        for i in 0..=200 {
            let tau = tau_max * i as f64 / 200.0;
            let g = fraczakai::subordinator::inverse_density(DensityQuery::new(cfg.beta, t, tau)?);
            let mut row = vec![t, tau, g, inverse_tail(cfg.beta, t, tau)];
            if closed {
                let exact = (-tau * tau / (4.0 * t)).exp() / (std::f64::consts::PI * t).sqrt();
                worst = worst.max((g - exact).abs());
                peak = peak.max(exact);
                row.push(exact);
            }
            rows.push(row);
        }
        mass_err = mass_err.max((inverse_density_mass(cfg.beta, t)? - 1.0).abs());
    }
    let mut columns = vec!["t", "tau", "density", "tail"];
    if closed {
        columns.push("closed_form");
        s.check(CheckFlag::below("closed_form_relative_error", worst / peak, tolerance(cfg, 1e-6)));
    }
    s.check(CheckFlag::below("mass_error", mass_err, 1e-6));
    s.table(out, "density.csv", &columns, &rows)?;
    Ok(())
}

/// Clock and operational pair sharing the config streams.
fn clock_and_pair(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<(InversePath, fraczakai::StatePath, ObservationRecord), RunError> {
    let real = TimeGrid::covering(cfg.horizon, cfg.step)?;
    let clock = sample_inverse_path(cfg.beta, &real, cfg.operational_step, cfg.seed, 0)?;
    let (y, z) = simulate_classical_pair_covering(model, clock.max_value(), cfg.operational_step, cfg.seed, 0)?;
    Ok((clock, y, z))
}

fn simulate(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    let (clock, y, z) = clock_and_pair(cfg, model)?;
    let (x, v) = time_change_pair(&y, &z, &clock)?;
    let m = v.channels();
    let mut columns = vec!["t".to_string(), "T".into(), "X".into()];
    columns.extend((0..m).map(|c| format!("V{c}")));
    let rows: Vec<Vec<f64>> = (0..clock.grid().len())
        .map(|k| {
            let mut r = vec![clock.grid().time(k), clock.values()[k], x.at(k)[0]];
            r.extend_from_slice(&v.values()[k * m..(k + 1) * m]);
            r
        })
        .collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    s.table(out, "path.csv", &cols, &rows)?;
    let mut op_columns = vec!["tau".to_string(), "Y".into()];
    op_columns.extend((0..m).map(|c| format!("Z{c}")));
    let op_rows: Vec<Vec<f64>> = (0..y.grid().len())
        .map(|k| {
            let mut r = vec![y.grid().time(k), y.at(k)[0]];
            r.extend_from_slice(&z.values()[k * m..(k + 1) * m]);
            r
        })
        .collect();
    let cols: Vec<&str> = op_columns.iter().map(String::as_str).collect();
    s.table(out, "operational.csv", &cols, &op_rows)?;
    if model.observation_jumps().is_some() {
        let direct = simulate_time_changed_state_direct(model, &clock, cfg.seed, 0)?;
        let obs = simulate_jump_observation(model, &direct, &clock, false, cfg.seed, 0)?;
        write_events(model, &direct, &obs, out, s)?;
    }
    let min_inc = (0..clock.grid().steps()).map(|k| clock.increment(k)).fold(f64::INFINITY, f64::min);
    s.check(CheckFlag::at_least("min_clock_increment", min_inc, 0.0));
    Ok(())
}

fn write_events(
    model: &ModelSpec,
    x: &fraczakai::StatePath,
    obs: &fraczakai::JumpObservationRecord,
    out: &Path,
    s: &mut Summary,
) -> Result<(), RunError> {
    let lambda = model.observation_jumps().and_then(|j| j.rate_multiplier()).expect("observation jumps carry a rate");
    let grid = obs.grid();
    let rows: Vec<Vec<f64>> = obs
        .events()
        .iter()
        .map(|e| {
            // pre-jump state: left end of the step holding the event
            let k = ((e.time / grid.step()).ceil() as usize).clamp(1, grid.steps()) - 1;
            vec![e.time, e.mark, lambda(x.at(k)[0], e.mark)]
        })
        .collect();
    s.set("events", rows.len());
    s.table(out, "events.csv", &["time", "mark", "lambda"], &rows)?;
    Ok(())
}

fn zakai(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    let grid = spatial_grid(cfg, model, s)?;
    let (y, z) = simulate_classical_pair(model, cfg.horizon, cfg.step, cfg.seed)?;
    let u = solve_zakai(model, &grid, &z)?;
    let rows: Vec<Vec<f64>> = (0..u.times().len())
        .map(|k| {
            let (mass, mean, var) = moments(&grid, u.snapshot(k));
            vec![u.times().time(k), y.at(k)[0], mass, mean, var]
        })
        .collect();
    s.table(out, "posterior.csv", &["t", "state", "mass", "mean", "variance"], &rows)?;
    let cols = snapshot_columns(&cfg.checkpoints);
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    s.table(out, "density.csv", &cols, &snapshot_rows(&grid, &cfg.checkpoints, |t| u.at_time(t))?)?;
    s.value("clamped_mass", u.clamped_mass());
    if cfg.is_linear_gaussian() {
        let (m0, sd0) = match model.initial {
            InitialLaw::Gaussian { mean, sd } => (mean, sd),
            InitialLaw::Point(p) => (p, 0.0),
        };
        let kb = kalman_bucy_reference(model.drift.eval(1.0), model.diffusion.eval(0.0), model.observation[0].eval(1.0), m0, sd0 * sd0, &z)?;
        let (mean_err, var_err) = kalman_bucy_sup_error(&u, &kb)?;
        let tol = tolerance(cfg, 5e-2);
        s.check(CheckFlag::below("kalman_bucy_mean_error", mean_err, tol));
        s.check(CheckFlag::below("kalman_bucy_variance_error", var_err, tol));
    }
    Ok(())
}

fn fractional_options(cfg: &ExperimentConfig) -> Result<FractionalOptions, RunError> {
    let steps = TimeGrid::covering(cfg.horizon, cfg.step)?.steps();
    Ok(FractionalOptions { max_steps: DEFAULT_MAX_STEPS.max(steps), ..FractionalOptions::default() })
}

fn frac_zakai(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    let grid = spatial_grid(cfg, model, s)?;
    let (clock, y, z) = clock_and_pair(cfg, model)?;
    let phi = solve_fractional_zakai_with(model, &grid, &clock, &z, fractional_options(cfg)?)?;
    let (x, _) = time_change_pair(&y, &z, &clock)?;
    let rows: Vec<Vec<f64>> = (0..phi.times().len())
        .map(|k| {
            let (mass, mean, var) = moments(&grid, phi.snapshot(k));
            vec![phi.times().time(k), clock.values()[k], x.at(k)[0], mass, mean, var]
        })
        .collect();
    let min_mass = rows.iter().map(|r| r[3]).fold(f64::INFINITY, f64::min);
    s.table(out, "posterior.csv", &["t", "T", "state", "mass", "mean", "variance"], &rows)?;
    let cols = snapshot_columns(&cfg.checkpoints);
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    s.table(out, "density.csv", &cols, &snapshot_rows(&grid, &cfg.checkpoints, |t| phi.at_time(t))?)?;
    s.value("clamped_mass", phi.clamped_mass());
    s.check(CheckFlag::at_least("min_mass", min_mass, f64::MIN_POSITIVE));
    Ok(())
}

fn oracle(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    if model.jumps.is_some() {
        return Err(RunError::Config("the pathwise oracle needs a model without jumps".into()));
    }
    let grid = spatial_grid(cfg, model, s)?;
    let (clock, _, z) = clock_and_pair(cfg, model)?;
    let phi = solve_fractional_zakai_with(model, &grid, &clock, &z, fractional_options(cfg)?)?;
    let u = solve_zakai(model, &grid, &z)?;
    let rows = pathwise_oracle_report(&phi, &u, &clock, &cfg.checkpoints)?;
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.t, r.operational_time, r.l1, r.sup]).collect();
    s.table(out, "oracle_report.csv", &["t", "operational_time", "l1", "sup"], &table)?;
    s.value("clamped_mass", phi.clamped_mass());
    let worst = rows.iter().map(|r| r.l1).fold(0.0, f64::max);
    s.check(CheckFlag::below("max_l1", worst, tolerance(cfg, 5e-2)));
    Ok(())
}

fn subordinate(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    if model.jumps.is_some() {
        return Err(RunError::Config("subordination runs need a model without jumps".into()));
    }
    // the identity holds for the unobserved (Fokker–Planck) equation
    let silent_model = model.clone().with_observation(vec![Coefficient::constant(0.0)]);
    let grid = spatial_grid(cfg, &silent_model, s)?;
    let tau_max = operational_horizon(cfg.beta, cfg.horizon, 1e-7)?;
    let op = TimeGrid::covering(tau_max, cfg.operational_step)?;
    let silent = ObservationRecord::from_increments(op, 1, &vec![0.0; op.steps()])?;
    let u = solve_zakai(&silent_model, &grid, &silent)?;
    let q = subordinate_quadrature(cfg.beta, cfg.horizon, &u)?;
    let real = TimeGrid::covering(cfg.horizon, cfg.step)?;
    let ens = fractional_ensemble(&silent_model, &grid, &real, cfg.operational_step, cfg.ensemble, cfg.seed)?;
    let rows: Vec<Vec<f64>> = (0..grid.n_nodes()).map(|j| vec![grid.x(j), q[j], ens[j]]).collect();
    s.table(out, "subordinate.csv", &["x", "quadrature", "ensemble"], &rows)?;
    s.value("operational_horizon", tau_max);
    s.check(CheckFlag::below("l1", grid.l1_distance(&q, &ens), tolerance(cfg, 1e-2)));
    Ok(())
}

fn jump_filter(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    if model.observation_jumps().is_none() {
        return Err(RunError::Config("jump-filter needs observation jumps (model = jump-poisson or jump.kind = observation)".into()));
    }
    let real = TimeGrid::covering(cfg.horizon, cfg.step)?;
    let clock = sample_inverse_path(cfg.beta, &real, cfg.operational_step, cfg.seed, 0)?;
    let x = simulate_time_changed_state_direct(model, &clock, cfg.seed, 0)?;
    let obs = simulate_jump_observation(model, &x, &clock, false, cfg.seed, 0)?;
    let report = fractional_filter_jump_obs(model, &clock, &obs, &TestFunction::identity(), cfg.particles, cfg.seed, &cfg.checkpoints)?;
    let e = &report.estimate;
    let rows: Vec<Vec<f64>> =
        (0..real.len()).map(|k| vec![real.time(k), clock.values()[k], x.at(k)[0], e.normalized[k], e.unnormalized[k], e.std_error[k], e.ess[k]]).collect();
    s.table(out, "filter.csv", &["t", "T", "state", "posterior_mean", "unnormalized", "std_error", "ess"], &rows)?;
    write_events(model, &x, &obs, out, s)?;
    let res: Vec<Vec<f64>> = report.residuals.iter().map(|r| vec![r.t, r.residual, r.std_error]).collect();
    s.table(out, "residuals.csv", &["t", "residual", "std_error"], &res)?;
    s.check(CheckFlag::at_least("min_ess", e.ess.iter().copied().fold(f64::INFINITY, f64::min), 2.0));
    let worst = report.residuals.iter().map(|r| r.residual.abs() / r.std_error).fold(0.0, f64::max);
    s.check(CheckFlag::below("residual_in_std_errors", worst, tolerance(cfg, 3.0)));
    Ok(())
}

/// Wall-clock timings; the only output that is not reproducible.
fn benchmark(cfg: &ExperimentConfig, model: &ModelSpec, out: &Path, s: &mut Summary) -> Result<(), RunError> {
    let grid = spatial_grid(cfg, model, s)?;
    let mut rows = Vec::new();
    let mut time = |name: &str, f: &mut dyn FnMut() -> Result<(), RunError>| -> Result<(), RunError> {
        let start = Instant::now();
        f()?;
        rows.push(vec![name.to_string(), fmt_float(start.elapsed().as_secs_f64())]);
        Ok(())
    };
    time("inverse_density_100x100", &mut || {
        for i in 1..=100 {
            for j in 0..100 {
                std::hint::black_box(fraczakai::subordinator::inverse_density(DensityQuery::new(cfg.beta, i as f64 / 50.0, j as f64 / 25.0)?));
            }
        }
        Ok(())
    })?;
    let (_, z) = simulate_classical_pair(model, cfg.horizon, cfg.step, cfg.seed)?;
    time("classical_zakai", &mut || {
        solve_zakai(model, &grid, &z)?;
        Ok(())
    })?;
    time("fractional_zakai", &mut || {
        let (clock, _, z) = clock_and_pair(cfg, model)?;
        solve_fractional_zakai_with(model, &grid, &clock, &z, fractional_options(cfg)?)?;
        Ok(())
    })?;
    time("particle_filter", &mut || {
        kallianpur_striebel_estimate(model, &z, &|x: &[f64]| x[0], cfg.particles, cfg.seed)?;
        Ok(())
    })?;
    let path = out.join("benchmark.csv");
    write_text_table(&path, &["operation", "seconds"], &rows)?;
    s.files.push(path);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: fraczakai::Error| RunError::from(e).exit_code();
        assert_eq!(code(fraczakai::Error::Domain("x".into())), 2);
        assert_eq!(code(fraczakai::Error::Grid("x".into())), 2);
        assert_eq!(code(fraczakai::Error::Horizon("x".into())), 3);
        assert_eq!(code(fraczakai::Error::Numerical("x".into())), 3);
        assert_eq!(RunError::Io(io::Error::other("x")).exit_code(), 3);
    }
}
