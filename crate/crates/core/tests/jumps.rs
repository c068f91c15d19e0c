use fraczakai::levy_ext::{simulate_jump_observation, simulate_jump_state, solve_fractional_zakai_jump_state, JumpObservationRecord};
use fraczakai::sde_sim::{simulate_classical_pair, time_changed_particle_estimate};
use fraczakai::zakai_classical::{moments, normalize_values};
use fraczakai::zakai_fractional::solve_fractional_zakai;
use fraczakai::*;
use rayon::prelude::*;

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn pure_jump_model(rate: f64) -> ModelSpec {
    ModelSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), vec![Coefficient::constant(0.0)], 0.5, InitialLaw::Point(0.0))
        .unwrap()
        .with_jumps(JumpSpec::state(rate, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |_, w| w).unwrap())
}

#[test]
fn pure_jump_mean_and_counts() {
    let model = pure_jump_model(2.0);
    let n = 20_000;
    let paths: Vec<JumpStatePath> = (0..n).into_par_iter().map(|i| simulate_jump_state(&model, 1.0, 0.01, 11, i).unwrap()).collect();
    let increments: Vec<f64> = paths.iter().map(|p| p.path.values().last().unwrap() - p.path.values()[0]).collect();
    let counts: Vec<f64> = paths.iter().map(|p| p.jumps.len() as f64).collect();
    let (m, _) = mean_and_variance(&increments);
    let (cm, cv) = mean_and_variance(&counts);
    // Poisson(2): sd of the sample mean √(2/n), of the sample variance √((μ₄ − σ⁴)/n) with μ₄ = λ(1 + 3λ)
    let se_mean = (2.0 / n as f64).sqrt();
    let se_var = ((2.0 * 7.0 - 4.0) / n as f64).sqrt();
    assert!((m - 2.0).abs() < 3.0 * se_mean, "mean {m}");
    assert!((cm - 2.0).abs() < 3.0 * se_mean, "count mean {cm}");
    assert!((cv - 2.0).abs() < 3.0 * se_var, "count variance {cv}");
}

#[test]
fn negative_rates_are_rejected() {
    assert!(JumpSpec::state(-1.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |_, w| w).is_err());
}

fn jump_diffusion(beta: f64, c: f64) -> ModelSpec {
    let atoms = vec![JumpAtom { mark: 0.5, probability: 0.5 }, JumpAtom { mark: -0.5, probability: 0.5 }];
    ModelSpec::ou_linear(-1.0, 1.0, c, beta)
        .unwrap()
        .with_initial(InitialLaw::Gaussian { mean: 0.5, sd: 0.5 })
        .with_jumps(JumpSpec::state(1.0, atoms, |_, w| w).unwrap())
}

#[test]
fn jump_fokker_planck_matches_a_histogram() {
    let model = jump_diffusion(0.999, 0.0);
    let grid = SpatialGrid::around(0.0, 1.0, 0.05).unwrap();
    let real = TimeGrid::covering(1.0, 1e-3).unwrap();
    let clock = InversePath::identity(real);
    let silent = ObservationRecord::from_increments(real, 1, &vec![0.0; real.steps()]).unwrap();
    let phi = solve_fractional_zakai_jump_state(&model, &grid, &clock, &silent).unwrap();
    let density = phi.snapshot(phi.times().len() - 1);

    let n = 100_000;
    let terminal: Vec<f64> = (0..n).into_par_iter().map(|i| *simulate_jump_state(&model, 1.0, 1e-3, 21, i).unwrap().path.values().last().unwrap()).collect();
    // bins of width 0.1 centred between grid nodes
    let width = 0.1;
    let bins = ((grid.upper() - grid.lower()) / width).round() as usize;
    let mut freq = vec![0.0; bins];
    for x in terminal {
        let b = ((x - grid.lower()) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            freq[b as usize] += 1.0 / n as f64;
        }
    }
    let per_bin = (width / grid.spacing()).round() as usize;
    let mut l1 = 0.0;
    for (b, f) in freq.iter().enumerate() {
        let lo = b * per_bin;
        // trapezoid over the nodes spanned by the bin
        let mass: f64 = (lo..lo + per_bin).map(|j| 0.5 * (density[j] + density[j + 1]) * grid.spacing()).sum();
        l1 += (mass - f).abs();
    }
    assert!(l1 < 5e-2, "L1 {l1}");
}

#[test]
fn zero_rate_jump_solver_matches_the_plain_solver() {
    let base = ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5).unwrap();
    let silent = base.clone().with_jumps(JumpSpec::state(0.0, vec![JumpAtom { mark: 1.0, probability: 1.0 }], |_, w| w).unwrap());
    let grid = SpatialGrid::around(0.0, 1.0, 0.1).unwrap();
    let real = TimeGrid::covering(0.5, 0.01).unwrap();
    let clock = fraczakai::subordinator::sample_inverse_path(0.5, &real, 0.01, 4, 0).unwrap();
    let (_, z) = fraczakai::sde_sim::simulate_classical_pair_covering(&base, clock.max_value(), 0.01, 4, 0).unwrap();
    let a = solve_fractional_zakai_jump_state(&silent, &grid, &clock, &z).unwrap();
    let b = solve_fractional_zakai(&base, &grid, &clock, &z).unwrap();
    for k in 0..a.times().len() {
        assert_eq!(a.snapshot(k), b.snapshot(k));
    }
    assert!(solve_fractional_zakai_jump_state(&base, &grid, &clock, &z).is_err());
}

#[test]
fn jump_state_posterior_mean_agrees_with_particles_near_the_classical_limit() {
    let model = jump_diffusion(0.999, 1.0);
    let (_, z) = simulate_classical_pair(&model, 1.0, 1e-3, 5).unwrap();
    let clock = InversePath::identity(*z.grid());
    let grid = SpatialGrid::around(0.0, 1.0, 0.02).unwrap();
    let phi = solve_fractional_zakai_jump_state(&model, &grid, &clock, &z).unwrap();
    let est = time_changed_particle_estimate(&model, &clock, &z, &|x: &[f64]| x[0], 10_000, 5).unwrap();
    for t in [0.25, 0.5, 1.0] {
        let (density, _) = normalize_values(&grid, &phi.at_time(t).unwrap()).unwrap();
        let (_, mean, _) = moments(&grid, &density);
        let k = z.grid().node_of(t).unwrap();
        let diff = (mean - est.normalized[k]).abs();
        assert!(diff < 3.0 * est.std_error[k], "t={t}: grid {mean}, particles {} ± {}", est.normalized[k], est.std_error[k]);
    }
}

#[test]
fn jump_observations_are_strictly_ordered() {
    let model = ModelSpec::jump_poisson(0.5).unwrap();
    let real = TimeGrid::covering(2.0, 1e-2).unwrap();
    let clock = fraczakai::subordinator::sample_inverse_path(0.5, &real, 1e-3, 3, 0).unwrap();
    let x = fraczakai::sde_sim::simulate_time_changed_state_direct(&model, &clock, 3, 0).unwrap();
    for reference in [false, true] {
        let obs: JumpObservationRecord = simulate_jump_observation(&model, &x, &clock, reference, 3, 0).unwrap();
        assert!(obs.events().windows(2).all(|w| w[0].time < w[1].time));
        assert!(obs.events().iter().all(|e| e.time > 0.0 && e.time <= 2.0));
    }
}

#[test]
fn jump_observation_residual_vanishes_in_the_classical_limit() {
    use fraczakai::levy_ext::{fractional_filter_jump_obs, TestFunction};
    let model = ModelSpec::jump_poisson(0.999).unwrap();
    let real = TimeGrid::covering(0.5, 2e-4).unwrap();
    let clock = InversePath::identity(real);
    let x = fraczakai::sde_sim::simulate_time_changed_state_direct(&model, &clock, 6, 0).unwrap();
    let obs = simulate_jump_observation(&model, &x, &clock, false, 6, 0).unwrap();
    let report = fractional_filter_jump_obs(&model, &clock, &obs, &TestFunction::identity(), 2000, 6, &[0.25, 0.5]).unwrap();
    for row in &report.residuals {
        assert!(row.residual.abs() < 3.0 * row.std_error, "{row:?}");
    }
}
