use fraczakai::rng::{stream, Purpose};
use fraczakai::sde_sim::{likelihood_path, simulate_classical_pair_indexed};
use fraczakai::subordinator::{inverse_mean, sample_inverse_path, sample_standard_stable};
use fraczakai::*;
use rayon::prelude::*;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn stable_laplace_transform() {
    for beta in [0.3, 0.7] {
        let mut rng = stream(17, 0, Purpose::Subordinator);
        let s = 1.3;
        let samples: Vec<f64> = (0..50_000).map(|_| (-s * sample_standard_stable(beta, &mut rng)).exp()).collect();
        let (m, se) = mean_and_se(&samples);
        let exact = (-s.powf(beta)).exp();
        assert!((m - exact).abs() < 3.0 * se, "beta {beta}: {m} vs {exact} ± {se}");
    }
}

#[test]
fn inverse_clock_mean() {
    let beta = 0.6;
    let real = TimeGrid::covering(1.0, 0.05).unwrap();
    let values: Vec<f64> = (0..20_000u64).into_par_iter().map(|i| *sample_inverse_path(beta, &real, 1e-3, 9, i).unwrap().values().last().unwrap()).collect();
    let (m, se) = mean_and_se(&values);
    // inversion on a grid of step δ biases upward by at most δ
    let exact = inverse_mean(beta, 1.0);
    assert!((m - exact).abs() < 3.0 * se + 1e-3, "{m} vs {exact} ± {se}");
}

#[test]
fn continuous_likelihood_is_a_martingale_under_the_reference_measure() {
    // with h unrelated to the simulated observation (c = 0 in the simulation),
    // the observation is a Brownian motion and Λ for c = 1 has mean one
    let reference = ModelSpec::ou_linear(-1.0, 1.0, 0.0, 0.5).unwrap();
    let filter = ModelSpec::ou_linear(-1.0, 1.0, 1.0, 0.5).unwrap();
    let values: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|i| {
            let (y, z) = simulate_classical_pair_indexed(&reference, 1.0, 0.01, 12, i).unwrap();
            *likelihood_path(&filter, &y, &z).unwrap().values().last().unwrap()
        })
        .collect();
    let (m, se) = mean_and_se(&values);
    assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
}
