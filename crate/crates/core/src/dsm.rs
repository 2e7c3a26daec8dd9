//! Denoising score matching.
//!
//! A model at scale `σ` is trained so that `H(x + σz) ≈ σz`. The minimizer
//! of `E ‖σz − H(x + σz)‖²` is `σ² (−∇ log p_σ)`, so a trained energy model
//! is a scaled negative log of the smoothed data density.
//!
//! Parameter gradients are exact for the piecewise-linear networks used
//! here: the score is differentiated once more through the network with the
//! activation pattern held fixed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::energy::{EnergyVariant, Model, ModelSpec, ScoreField};
use crate::error::{invalid, MuseError, Result};
use crate::gmm::GmmPrior;
use crate::io::{read_json, write_json};
use crate::nn::{optimizer_step, spectral_normalize, AdamConfig, MlpParams, OptimizerState};
use crate::tensor::{Rng, Signal};

/// Power iterations per layer when spectrally normalizing during training.
const SN_ITERS: usize = 200;

/// Default number of generated toy samples (train and validation together).
pub const DEFAULT_TOY_SAMPLES: usize = 10_000;

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    Ok(())
}

/// Mean over rows of `‖σz − H(x + σz)‖²` for any score field.
pub fn dsm_loss_value(
    field: &dyn ScoreField,
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    if x.dim() != z.dim() || x.nrows() == 0 {
        return invalid("data and noise batches must be non-empty and equally shaped");
    }
    let sz = &z * sigma;
    let h = field.score_batch((&x + &sz).view())?;
    let e = sz - h;
    Ok((&e * &e).sum() / x.nrows() as f64)
}

/// DSM loss and its exact parameter gradient for given data and noise.
pub fn dsm_loss_with_noise(
    model: &Model,
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    sigma: f64,
) -> Result<(f64, MlpParams)> {
    check_sigma(sigma)?;
    if x.dim() != z.dim() || x.nrows() == 0 {
        return invalid("data and noise batches must be non-empty and equally shaped");
    }
    let b = x.nrows() as f64;
    let net = model.net();
    let sz = &z * sigma;
    let xt = &x + &sz;
    let (y, cache) = net.forward_batch(xt.view())?;
    let ones = || Array2::<f64>::ones((x.nrows(), 1));

    let (h, r) = match model {
        Model::Energy(m) => match m.variant {
            EnergyVariant::E1 => {
                let r = &xt - &y;
                let g = net.vjp_input_batch(&cache, r.view())?;
                (&r - &g, Some(r))
            }
            EnergyVariant::E2 => (net.vjp_input_batch(&cache, ones().view())?, None),
            EnergyVariant::E3 => (&xt - &net.vjp_input_batch(&cache, ones().view())?, None),
        },
        Model::Score(_) => (y, None),
    };

    let e = &sz - &h;
    let loss = (&e * &e).sum() / b;
    let h_bar = e * (-2.0 / b);

    let grads = match model {
        Model::Energy(m) => match m.variant {
            EnergyVariant::E1 => {
                let r = r.expect("E1 keeps its residual");
                // H = r − G(θ, r) with G = J^T r.
                let g_bar = -&h_bar;
                let (r_bar_g, mut grads) = net.vjp_adjoint_batch(&cache, r.view(), g_bar.view())?;
                let r_bar = &h_bar + &r_bar_g;
                // r = x̃ − Ψ(x̃)
                let (_, grads_psi) = net.vjp_batch(&cache, (-r_bar).view())?;
                grads.axpy(1.0, &grads_psi);
                grads
            }
            EnergyVariant::E2 => net.vjp_adjoint_batch(&cache, ones().view(), h_bar.view())?.1,
            EnergyVariant::E3 => {
                net.vjp_adjoint_batch(&cache, ones().view(), (-h_bar).view())?
                    .1
            }
        },
        Model::Score(_) => net.vjp_batch(&cache, h_bar.view())?.1,
    };
    Ok((loss, grads))
}

/// DSM loss on a batch of signals with fresh noise drawn from `rng`.
pub fn dsm_loss(
    model: &Model,
    batch: &[Signal],
    sigma: f64,
    rng: &mut Rng,
) -> Result<(f64, MlpParams)> {
    check_sigma(sigma)?;
    let x = stack(batch)?;
    let z = Array2::from_shape_fn(x.raw_dim(), |_| rng.normal());
    dsm_loss_with_noise(model, x.view(), z.view(), sigma)
}

fn stack(batch: &[Signal]) -> Result<Array2<f64>> {
    let Some(first) = batch.first() else {
        return invalid("empty batch");
    };
    let d = first.len();
    if batch.iter().any(|s| s.len() != d) {
        return invalid("batch signals differ in length");
    }
    let flat: Vec<f64> = batch.iter().flat_map(|s| s.as_slice().iter().copied()).collect();
    Ok(Array2::from_shape_vec((batch.len(), d), flat).expect("length checked"))
}

/// Training and validation samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Array2<f64>,
    pub validation: Array2<f64>,
}

impl Dataset {
    /// Shuffle with `rng` and hold out the last 10% for validation.
    pub fn split(samples: Array2<f64>, rng: &mut Rng) -> Result<Self> {
        let n = samples.nrows();
        if n < 2 {
            return invalid("dataset needs at least two samples");
        }
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let n_val = (n / 10).max(1);
        let pick = |idx: &[usize]| samples.select(Axis(0), idx);
        Ok(Self {
            train: pick(&order[..n - n_val]),
            validation: pick(&order[n - n_val..]),
        })
    }

    pub fn from_gmm(prior: &GmmPrior, n: usize, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let samples = prior.sample_matrix(&mut rng, n)?;
        Self::split(samples, &mut rng.fork(7))
    }

    /// Rows of a signal file: the first axis indexes samples.
    pub fn from_signal(signal: &Signal, seed: u64) -> Result<Self> {
        let n = signal.shape()[0];
        let d = signal.len() / n;
        let samples = Array2::from_shape_vec((n, d), signal.as_slice().to_vec())
            .map_err(|e| MuseError::InvalidArgument(e.to_string()))?;
        Self::split(samples, &mut Rng::new(seed))
    }

    pub fn dim(&self) -> usize {
        self.train.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sigma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Optimizer steps between spectral normalizations; 0 disables it.
    pub spectral_norm_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        if self.batch_size == 0 || self.epochs == 0 {
            return invalid("batch_size and epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning_rate must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub sigma: f64,
    /// Mean training DSM loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation DSM loss after each epoch, with noise fixed per run.
    pub validation_losses: Vec<f64>,
    pub initial_validation_loss: f64,
    pub final_loss: f64,
    /// Loss of the zero score, `σ² d`.
    pub baseline_loss: f64,
    pub steps: u64,
    pub wall_time_s: f64,
    pub checkpoint_path: Option<PathBuf>,
}

/// Training stopped early; `report` holds the epochs completed so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct TrainFailure {
    pub report: Option<Box<TrainReport>>,
    #[source]
    pub error: MuseError,
}

impl From<MuseError> for TrainFailure {
    fn from(error: MuseError) -> Self {
        Self {
            report: None,
            error,
        }
    }
}

impl From<TrainFailure> for MuseError {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

fn normalize(model: &mut Model, rng: &mut Rng) -> Result<()> {
    let net = spectral_normalize(model.net(), SN_ITERS, rng)?;
    *model.net_mut() = net;
    Ok(())
}

/// Train `model` with Adam on `data` at the configured scale.
pub fn train(
    mut model: Model,
    config: &TrainConfig,
    data: &Dataset,
) -> std::result::Result<(Model, TrainReport), TrainFailure> {
    config.validate()?;
    if data.dim() != model.net().input_dim() {
        return Err(MuseError::InvalidArgument("dataset dimension does not match model".into()).into());
    }
    let start = Instant::now();
    let root = Rng::new(config.seed);
    let mut order_rng = root.fork(1);
    let mut noise_rng = root.fork(2);
    let mut sn_rng = root.fork(3);
    let val_z = {
        let mut r = root.fork(4);
        Array2::from_shape_fn(data.validation.raw_dim(), |_| r.normal())
    };
    let sn = config.spectral_norm_every > 0;
    if sn {
        normalize(&mut model, &mut sn_rng)?;
    }
    let val_loss =
        |m: &Model| dsm_loss_value(m.as_field(), data.validation.view(), val_z.view(), config.sigma);

    let mut report = TrainReport {
        sigma: config.sigma,
        epoch_losses: Vec::with_capacity(config.epochs),
        validation_losses: Vec::with_capacity(config.epochs),
        initial_validation_loss: val_loss(&model)?,
        final_loss: f64::NAN,
        steps: 0,
        baseline_loss: config.sigma * config.sigma * data.dim() as f64,
        wall_time_s: 0.0,
        checkpoint_path: None,
    };
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut opt = OptimizerState::new(model.net(), adam);
    let n = data.train.nrows();
    let d = data.dim();
    let mut order: Vec<usize> = (0..n).collect();

    let fail = |report: &TrainReport, error: MuseError, start: &Instant| {
        let mut partial = report.clone();
        partial.wall_time_s = start.elapsed().as_secs_f64();
        TrainFailure {
            report: Some(Box::new(partial)),
            error,
        }
    };

    for _ in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = data.train.select(Axis(0), chunk);
            let z = Array2::from_shape_fn((chunk.len(), d), |_| noise_rng.normal());
            let (loss, grads) = dsm_loss_with_noise(&model, x.view(), z.view(), config.sigma)
                .map_err(|e| fail(&report, e, &start))?;
            if !loss.is_finite() {
                let e = MuseError::TrainingDiverged {
                    step: report.steps as usize,
                    reason: "non-finite loss".into(),
                };
                return Err(fail(&report, e, &start));
            }
            optimizer_step(&mut opt, model.net_mut(), &grads).map_err(|e| fail(&report, e, &start))?;
            report.steps += 1;
            if sn && report.steps.is_multiple_of(config.spectral_norm_every as u64) {
                normalize(&mut model, &mut sn_rng).map_err(|e| fail(&report, e, &start))?;
            }
            sum += loss;
            batches += 1;
        }
        report.epoch_losses.push(sum / batches as f64);
        let v = val_loss(&model).map_err(|e| fail(&report, e, &start))?;
        if !v.is_finite() {
            let e = MuseError::TrainingDiverged {
                step: report.steps as usize,
                reason: "non-finite validation loss".into(),
            };
            return Err(fail(&report, e, &start));
        }
        report.validation_losses.push(v);
    }
    if sn {
        normalize(&mut model, &mut sn_rng)?;
        let v = val_loss(&model)?;
        *report.validation_losses.last_mut().expect("epochs >= 1") = v;
    }
    report.final_loss = *report.validation_losses.last().expect("epochs >= 1");
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((model, report))
}

/// One manifest entry: a checkpoint trained at `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sigma: f64,
    pub checkpoint_path: PathBuf,
}

pub fn check_descending(sigmas: &[f64]) -> Result<()> {
    if sigmas.is_empty() {
        return invalid("at least one noise scale is required");
    }
    for w in sigmas.windows(2) {
        if w[0] == w[1] {
            return invalid(format!("duplicate noise scale {}", w[0]));
        }
        if w[0] < w[1] {
            return invalid("noise scales must be sorted from coarse to fine");
        }
    }
    Ok(())
}

/// Checkpoint file name used for a scale inside a multiscale directory.
pub fn checkpoint_name(spec: &ModelSpec, sigma: f64) -> String {
    format!("{}_sigma{sigma}.ckpt", spec.kind.name())
}

/// Train one independent model per scale, coarse to fine, saving each
/// checkpoint and a `manifest.json` listing them in order.
pub fn train_multiscale(
    spec: &ModelSpec,
    configs: &[TrainConfig],
    data: &Dataset,
    out_dir: &Path,
) -> std::result::Result<Vec<(Model, TrainReport)>, TrainFailure> {
    let sigmas: Vec<f64> = configs.iter().map(|c| c.sigma).collect();
    check_descending(&sigmas)?;
    std::fs::create_dir_all(out_dir).map_err(|e| MuseError::io(out_dir, e))?;
    let mut out = Vec::with_capacity(configs.len());
    let mut manifest = Vec::with_capacity(configs.len());
    for cfg in configs {
        let model = spec.init(data.dim(), cfg.sigma, cfg.seed)?;
        let (model, mut report) = train(model, cfg, data)?;
        let name = checkpoint_name(spec, cfg.sigma);
        save_checkpoint(&model, &out_dir.join(&name))?;
        report.checkpoint_path = Some(out_dir.join(&name));
        manifest.push(ManifestEntry {
            sigma: cfg.sigma,
            checkpoint_path: PathBuf::from(name),
        });
        out.push((model, report));
    }
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(out)
}

/// Read a manifest, resolving relative checkpoint paths against its folder.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = read_json(path)?;
    let sigmas: Vec<f64> = entries.iter().map(|e| e.sigma).collect();
    check_descending(&sigmas).map_err(|e| MuseError::format(path, e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(entries
        .into_iter()
        .map(|e| ManifestEntry {
            sigma: e.sigma,
            checkpoint_path: if e.checkpoint_path.is_relative() {
                dir.join(e.checkpoint_path)
            } else {
                e.checkpoint_path
            },
        })
        .collect())
}

/// Mean per-row squared norm, handy for reporting data scale.
pub fn mean_square_norm(x: ArrayView2<f64>) -> f64 {
    let sq: Array1<f64> = x.map_axis(Axis(1), |r| r.dot(&r));
    sq.mean().unwrap_or(0.0)
}
