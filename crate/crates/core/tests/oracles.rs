//! Closed forms checked against independent numerical oracles: Jacobi SVD
//! for spectral norms, brute-force quadrature for Gaussian smoothing.

mod common;

use common::{jacobi_singular_values, top_singular_value};
use muse_core::gmm::GmmPrior;
use muse_core::nn::{spectral_normalize, Activation, Dense, MlpParams};
use muse_core::operators::{dense_matrix, LinearOperator};
use muse_core::Rng;
use ndarray::{arr2, Array1, Array2};

#[test]
fn jacobi_oracle_on_known_matrices() {
    let sv = jacobi_singular_values(&arr2(&[[3.0, 0.0], [0.0, -2.0]]));
    assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 2.0).abs() < 1e-14);
    // Singular values of [[1, 1], [0, 1]] are the golden ratio and its inverse.
    let s = jacobi_singular_values(&arr2(&[[1.0, 1.0], [0.0, 1.0]]));
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((s[0] - phi).abs() < 1e-13 && (s[1] - 1.0 / phi).abs() < 1e-13);
}

#[test]
fn dense_operators_are_normalized() {
    let mut rng = Rng::new(8);
    for (r, c) in [(16, 16), (5, 12), (20, 3), (1, 7)] {
        let op = LinearOperator::dense_gaussian(r, c, &mut rng).unwrap();
        let top = top_singular_value(&dense_matrix(&op).unwrap());
        assert!((1.0 - 1e-4..=1.0).contains(&top), "{r}x{c}: {top}");
    }
}

#[test]
fn spectral_normalization_against_svd() {
    let mut rng = Rng::new(21);
    let layers: Vec<Dense> = (0..3)
        .map(|_| {
            let w = Array2::from_shape_fn((8, 8), |_| 3.0 * rng.normal());
            Dense::new(w, Array1::zeros(8), Activation::Relu).unwrap()
        })
        .collect();
    let net = MlpParams::new(layers, None).unwrap();
    let normalized = spectral_normalize(&net, 200, &mut rng).unwrap();
    for layer in normalized.chain() {
        let top = top_singular_value(&layer.weight);
        assert!((1.0 - 1e-4..=1.0 + 1e-3).contains(&top), "{top}");
    }
}

/// `(p * N(0, σ²I))(x)` by the 2-D trapezoid rule over `x ± 6σ`.
fn convolved_density(prior: &GmmPrior, sigma: f64, x: [f64; 2], step: f64) -> f64 {
    let half = 6.0 * sigma;
    let n = (2.0 * half / step).round() as usize;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
    let mut sum = 0.0;
    for i in 0..=n {
        let u = -half + i as f64 * step;
        let wu = if i == 0 || i == n { 0.5 } else { 1.0 };
        for j in 0..=n {
            let v = -half + j as f64 * step;
            let wv = if j == 0 || j == n { 0.5 } else { 1.0 };
            let kernel = norm * (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
            let p = prior.smoothed_density(0.0, &[x[0] - u, x[1] - v]).unwrap();
            sum += wu * wv * kernel * p;
        }
    }
    sum * step * step
}

#[test]
fn smoothing_matches_quadrature() {
    let prior = GmmPrior::four_cluster_toy();
    let sigma = 0.2;
    for i in 0..5 {
        for j in 0..5 {
            let x = [-1.6 + 0.8 * i as f64, -1.6 + 0.8 * j as f64];
            let exact = prior.smoothed_density(sigma, &x).unwrap();
            let quad = convolved_density(&prior, sigma, x, 0.005);
            let rel = (exact - quad).abs() / exact;
            assert!(rel < 1e-4, "{x:?}: closed form {exact:e}, quadrature {quad:e}");
        }
    }
}

#[test]
fn large_scale_is_a_single_gaussian() {
    let prior = GmmPrior::four_cluster_toy();
    let spread = 1.0;
    let sigma = 100.0 * spread;
    let mean = prior.mixture_mean();
    let v = prior.variances()[0] + sigma * sigma;
    let mut rng = Rng::new(4);
    for _ in 0..20 {
        let x = [sigma * rng.normal(), sigma * rng.normal()];
        let s = prior.smoothed_score(sigma, &x).unwrap();
        let g = [(x[0] - mean[0]) / v, (x[1] - mean[1]) / v];
        let err = ((s[0] - g[0]).powi(2) + (s[1] - g[1]).powi(2)).sqrt();
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!(err / norm < 1e-2, "{x:?}");
    }
}

#[test]
fn cluster_frequencies_match_weights() {
    let prior = GmmPrior::four_cluster_toy();
    let samples = prior.sample(&mut Rng::new(99), 10_000).unwrap();
    let mut counts = [0usize; 4];
    for s in &samples {
        let x = s.as_slice();
        let nearest = prior
            .means()
            .iter()
            .enumerate()
            .map(|(k, m)| (k, (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        counts[nearest] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        let freq = *c as f64 / samples.len() as f64;
        assert!((freq - prior.weights()[k]).abs() < 0.02, "component {k}: {freq}");
    }
}

#[test]
fn log_sum_exp_is_stable_far_away() {
    let prior = GmmPrior::four_cluster_toy();
    for x in [[1e3, 0.0], [-7e2, 7e2], [0.0, -1e3]] {
        let e = prior.smoothed_energy(0.1, &x).unwrap();
        let s = prior.smoothed_score(0.1, &x).unwrap();
        assert!(e.is_finite() && s.iter().all(|v| v.is_finite()), "{x:?}");
    }
}
