//! Denoising evaluation against closed-form PSNR values.

use muse_cli::denoise::{evaluate_denoiser, DenoiseSettings, Denoiser};
use muse_core::metrics::PSNR_CAP_DB;
use muse_core::Signal;

/// Items with unit peak, so the noisy PSNR is about `−20 log10 σ`.
fn unit_peak_items(n: usize, dim: usize) -> Vec<Signal> {
    (0..n)
        .map(|_| {
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            Signal::from_vec(v).unwrap()
        })
        .collect()
}

#[test]
fn identity_matches_the_noise_level() {
    let items = unit_peak_items(50, 4000);
    let settings = DenoiseSettings::default();
    for sigma in [0.01, 0.05, 0.2] {
        let row = evaluate_denoiser("identity", &Denoiser::Identity, &items, sigma, 3, &settings).unwrap();
        let expected = -20.0 * sigma.log10();
        assert!((row.psnr_mean - expected).abs() < 0.1, "{sigma}: {} vs {expected}", row.psnr_mean);
        assert_eq!(row.count, 50);
    }
}

#[test]
fn perfect_denoiser_hits_the_cap() {
    let items = unit_peak_items(10, 8);
    let clean = items[0].clone();
    let perfect = Denoiser::Custom(Box::new(move |_, _| Ok(clean.clone())));
    let row = evaluate_denoiser("perfect", &perfect, &items, 0.05, 0, &DenoiseSettings::default()).unwrap();
    assert_eq!(row.psnr_mean, PSNR_CAP_DB);
    assert_eq!(row.psnr_std, 0.0);
}

#[test]
fn every_model_sees_the_same_noise() {
    let items = unit_peak_items(5, 16);
    let settings = DenoiseSettings::default();
    let a = evaluate_denoiser("a", &Denoiser::Identity, &items, 0.1, 9, &settings).unwrap();
    let b = evaluate_denoiser("b", &Denoiser::Identity, &items, 0.1, 9, &settings).unwrap();
    assert_eq!(a.psnr_mean, b.psnr_mean);
    assert!(evaluate_denoiser("c", &Denoiser::Identity, &[], 0.1, 9, &settings).is_err());
}
