//! DSM training end to end: loss decrease, determinism, multiscale
//! manifests and field export.

use muse_core::checkpoint::{encode_model, load_checkpoint};
use muse_core::dsm::{checkpoint_name, load_manifest, train, train_multiscale, Dataset, TrainConfig};
use muse_core::energy::{EnergyVariant, Model, ModelKind, ModelSpec, ScoreVariant};
use muse_core::gmm::{field_grid_export, Bounds, GmmPrior};

fn toy_data(n: usize) -> Dataset {
    Dataset::from_gmm(&GmmPrior::four_cluster_toy(), n, 3).unwrap()
}

fn config(sigma: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        sigma,
        batch_size: 64,
        epochs,
        learning_rate: 1e-3,
        seed: 9,
        spectral_norm_every: 0,
    }
}

#[test]
fn training_beats_the_zero_score() {
    let data = toy_data(2000);
    for variant in [EnergyVariant::E1, EnergyVariant::E2, EnergyVariant::E3] {
        let model = ModelSpec::new(ModelKind::Energy(variant), 32, 2).init(2, 0.2, 1).unwrap();
        let (_, report) = train(model, &config(0.2, 40), &data).unwrap();
        assert_eq!(report.validation_losses.len(), 40);
        assert!(
            report.final_loss < report.baseline_loss,
            "{variant:?}: {} vs baseline {}",
            report.final_loss,
            report.baseline_loss
        );
        assert!(report.final_loss < report.initial_validation_loss);
    }
}

#[test]
fn training_is_deterministic() {
    let data = toy_data(500);
    let run = || {
        let model = ModelSpec::new(ModelKind::Energy(EnergyVariant::E1), 16, 2)
            .init(2, 0.3, 4)
            .unwrap();
        encode_model(&train(model, &config(0.3, 2), &data).unwrap().0)
    };
    assert_eq!(run(), run());
}

#[test]
fn contractive_training_stays_contractive() {
    let data = toy_data(500);
    let kind = ModelKind::Score(ScoreVariant::Contractive);
    let model = ModelSpec::new(kind, 16, 3).init(2, 0.2, 2).unwrap();
    let cfg = TrainConfig {
        spectral_norm_every: 1,
        ..config(0.2, 3)
    };
    let (model, _) = train(model, &cfg, &data).unwrap();
    assert!(model.as_score().unwrap().is_contractive(1e-3));
}

#[test]
fn multiscale_training_writes_an_ordered_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(300);
    let spec = ModelSpec::new(ModelKind::Energy(EnergyVariant::E1), 8, 2);
    let configs: Vec<TrainConfig> = [0.5, 0.2, 0.1].iter().map(|&s| config(s, 1)).collect();
    let out = train_multiscale(&spec, &configs, &data, dir.path()).unwrap();
    assert_eq!(out.len(), 3);
    let entries = load_manifest(&dir.path().join("manifest.json")).unwrap();
    let sigmas: Vec<f64> = entries.iter().map(|e| e.sigma).collect();
    assert_eq!(sigmas, vec![0.5, 0.2, 0.1]);
    for ((entry, (model, _)), sigma) in entries.iter().zip(&out).zip(&sigmas) {
        assert!(entry.checkpoint_path.ends_with(checkpoint_name(&spec, *sigma)));
        let loaded = load_checkpoint(&entry.checkpoint_path).unwrap();
        assert_eq!(encode_model(&loaded), encode_model(model));
    }
}

#[test]
fn multiscale_rejects_unsorted_or_repeated_scales() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(100);
    let spec = ModelSpec::new(ModelKind::Energy(EnergyVariant::E1), 4, 1);
    for sigmas in [vec![0.1, 0.5], vec![0.5, 0.5], vec![]] {
        let configs: Vec<TrainConfig> = sigmas.iter().map(|&s| config(s, 1)).collect();
        assert!(train_multiscale(&spec, &configs, &data, dir.path()).is_err(), "{sigmas:?}");
    }
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn malformed_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, r#"[{"sigma": 0.1, "checkpoint_path": "a"}, {"sigma": 0.5, "checkpoint_path": "b"}]"#)
        .unwrap();
    assert!(load_manifest(&path).is_err());
    std::fs::write(&path, "not json").unwrap();
    assert!(load_manifest(&path).is_err());
}

#[test]
fn zero_net_e1_exports_the_quadratic_field() {
    let sigma = 0.5;
    let net = ModelSpec::new(ModelKind::Energy(EnergyVariant::E1), 8, 2)
        .init(2, sigma, 0)
        .unwrap()
        .net()
        .zeros_like();
    let model = Model::from_parts(ModelKind::Energy(EnergyVariant::E1), net, sigma).unwrap();
    let rows = field_grid_export(model.as_field(), Bounds::square(2.0), 100, sigma).unwrap();
    assert_eq!(rows.len(), 10_000);
    let s2 = sigma * sigma;
    for r in &rows {
        let e = r.energy.unwrap();
        assert!((e * s2 - 0.5 * (r.x * r.x + r.y * r.y)).abs() < 1e-12);
        assert!((r.score_x * s2 - r.x).abs() < 1e-12 && (r.score_y * s2 - r.y).abs() < 1e-12);
    }
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let data = toy_data(100);
    let model = ModelSpec::new(ModelKind::Energy(EnergyVariant::E2), 4, 1).init(3, 0.2, 0).unwrap();
    assert!(train(model, &config(0.2, 1), &data).is_err());
}
