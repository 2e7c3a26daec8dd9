//! Held-out denoising: one MAP solve with `A = I` per noisy item for energy
//! models, one residual step `y − F(y)` for score networks.

use std::io::Write;
use std::path::Path;

use muse_core::energy::{pairwise_lipschitz, EnergyModel, Model, ScoreBaseline, ScoreField};
use muse_core::io::fmt_sig;
use muse_core::metrics::{peak_magnitude, psnr};
use muse_core::operators::LinearOperator;
use muse_core::solvers::{algorithm_select, solve, MapProblem, SolveConfig, Termination};
use muse_core::{MuseError, Result, Rng, Signal};

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseSettings {
    /// Fixed `L` for energy models; estimated from sample pairs when absent.
    pub lipschitz: Option<f64>,
    pub lipschitz_pairs: usize,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for DenoiseSettings {
    fn default() -> Self {
        Self {
            lipschitz: None,
            lipschitz_pairs: 512,
            epsilon: 1e-6,
            max_iter: 5000,
        }
    }
}

type DenoiseFn = Box<dyn Fn(&Signal, f64) -> Result<Signal>>;

pub enum Denoiser {
    /// Returns the noisy input; its PSNR is the noisy baseline.
    Identity,
    Energy { model: EnergyModel, lipschitz: f64 },
    Score(ScoreBaseline),
    /// Any map from `(y, σ)` to an estimate.
    Custom(DenoiseFn),
}

impl Denoiser {
    /// Wraps a trained model. Energy models get `L` from the settings or
    /// from pairs around `anchors` at the model's scale.
    pub fn from_model(model: Model, anchors: &[Signal], settings: &DenoiseSettings) -> Result<Self> {
        match model {
            Model::Score(s) => Ok(Denoiser::Score(s)),
            Model::Energy(m) => {
                let lipschitz = match settings.lipschitz {
                    Some(l) => l,
                    None => pairwise_lipschitz(
                        &m,
                        anchors,
                        m.sigma,
                        &mut Rng::new(0x11f),
                        settings.lipschitz_pairs,
                    )?,
                };
                Ok(Denoiser::Energy {
                    model: m,
                    lipschitz,
                })
            }
        }
    }

    pub fn denoise(&self, y: &Signal, sigma: f64, settings: &DenoiseSettings) -> Result<Signal> {
        match self {
            Denoiser::Identity => Ok(y.clone()),
            Denoiser::Score(s) => Ok(y.sub(&s.score(y)?)),
            Denoiser::Custom(f) => f(y, sigma),
            Denoiser::Energy { model, lipschitz } => {
                let op = LinearOperator::identity(y.shape(), y.channels())?;
                let p = MapProblem::new(&op, y, sigma * sigma, model, model.sigma * model.sigma)?;
                let cfg = SolveConfig {
                    algorithm: algorithm_select(&p, *lipschitz),
                    lipschitz: *lipschitz,
                    epsilon: settings.epsilon,
                    max_iter: settings.max_iter,
                    ..SolveConfig::default()
                };
                let trace = solve(&p, &cfg, y)?;
                if trace.termination == Termination::Diverged {
                    return Err(MuseError::Diverged {
                        iteration: trace.iterations + 1,
                    });
                }
                Ok(trace.final_iterate)
            }
        }
    }
}

/// One row of the denoising table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DenoiseRow {
    pub model: String,
    pub sigma: f64,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub count: usize,
}

/// Noise for scale `sigma`; identical for every model evaluated with `seed`.
pub fn noise_stream(seed: u64, sigma: f64) -> Rng {
    Rng::new(seed).fork(sigma.to_bits())
}

/// Mean and sample standard deviation of per-item PSNR, with the peak set to
/// each reference's largest magnitude.
pub fn evaluate_denoiser(
    name: &str,
    denoiser: &Denoiser,
    items: &[Signal],
    sigma: f64,
    seed: u64,
    settings: &DenoiseSettings,
) -> Result<DenoiseRow> {
    if items.is_empty() {
        return Err(MuseError::InvalidArgument("no held-out items".into()));
    }
    let mut rng = noise_stream(seed, sigma);
    let mut values = Vec::with_capacity(items.len());
    for x in items {
        let noise = rng.normal_vec(x.len());
        let y = x.with_data(x.as_slice().iter().zip(&noise).map(|(a, n)| a + sigma * n).collect());
        let est = denoiser.denoise(&y, sigma, settings)?;
        let peak = peak_magnitude(x);
        values.push(psnr(&est, x, if peak > 0.0 { peak } else { 1.0 })?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(DenoiseRow {
        model: name.to_string(),
        sigma,
        psnr_mean: mean,
        psnr_std: var.sqrt(),
        count: values.len(),
    })
}

/// CSV with header `model,sigma,psnr_mean,psnr_std`.
pub fn write_table_csv(rows: &[DenoiseRow], path: &Path) -> Result<()> {
    let mut out = String::from("model,sigma,psnr_mean,psnr_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.model,
            fmt_sig(r.sigma),
            fmt_sig(r.psnr_mean),
            fmt_sig(r.psnr_std)
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| MuseError::io(path, e))
}
