//! Small problem instances shared by the reproduction claims.

use muse_core::dsm::{train, Dataset, TrainConfig, TrainReport};
use muse_core::energy::{Model, ModelKind, ModelSpec};
use muse_core::gmm::GmmPrior;
use muse_core::operators::{generate_vd_mask, simulate_measurements, LinearOperator, MaskSpec};
use muse_core::{Result, Rng, Signal};

pub const TEMPLATE_ROWS: usize = 8;
pub const TEMPLATE_COLS: usize = 4;
/// Per-component variance of the template mixture.
pub const TEMPLATE_VARIANCE: f64 = 0.01;
/// Fraction of the first template direction that lives on measured lines.
const TEMPLATE_LEAK: f64 = 0.1;
/// Spread of the ground truth around its template.
const TRUTH_SPREAD: f64 = 0.1;

/// Four-template mixture on an 8×4 complex image seen through a 2× masked
/// DFT.
///
/// The templates are `±u₁ ± u₂`, with `u₁` almost entirely in the unmeasured
/// k-space lines and `u₂` entirely in the measured ones. Measurements pin
/// down the sign of `u₂` but barely that of `u₁`, so the posterior has two
/// competing modes.
#[derive(Debug, Clone)]
pub struct TemplateToy {
    pub op: LinearOperator,
    pub prior: GmmPrior,
    pub x_true: Signal,
    seed: u64,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

impl TemplateToy {
    pub fn new(seed: u64) -> Result<Self> {
        let (r, c) = (TEMPLATE_ROWS, TEMPLATE_COLS);
        let mask = generate_vd_mask(&MaskSpec {
            num_lines: r,
            acceleration: 2.0,
            center_fraction: 0.25,
            seed: 3,
        })?;
        let op = LinearOperator::masked_dft(r, c, mask.clone())?;
        let full = LinearOperator::masked_dft(r, c, vec![true; r])?;

        let mut rng = Rng::new(seed);
        let mut k1 = vec![0.0; r * c * 2];
        let mut k2 = vec![0.0; r * c * 2];
        for (row, &measured) in mask.iter().enumerate() {
            for j in 0..2 * c {
                let i = row * 2 * c + j;
                let (a, b) = (rng.normal(), rng.normal());
                if measured {
                    k1[i] = TEMPLATE_LEAK * a;
                    k2[i] = b;
                } else {
                    k1[i] = a;
                }
            }
        }
        let kspace = |k: Vec<f64>| Signal::new(k, vec![r, c], 2);
        let u1 = unit(full.adjoint(&kspace(k1)?)?.into_vec());
        let u2 = full.adjoint(&kspace(k2)?)?.into_vec();
        let p12: f64 = u1.iter().zip(&u2).map(|(a, b)| a * b).sum();
        let u2 = unit(u2.iter().zip(&u1).map(|(b, a)| b - p12 * a).collect());

        let means: Vec<Vec<f64>> = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|(s1, s2)| u1.iter().zip(&u2).map(|(a, b)| s1 * a + s2 * b).collect())
            .collect();
        let prior = GmmPrior::new(vec![0.25; 4], means.clone(), vec![TEMPLATE_VARIANCE; 4])?;
        let x_true: Vec<f64> = means[0]
            .iter()
            .map(|m| m + TRUTH_SPREAD * rng.normal())
            .collect();
        Ok(Self {
            op,
            prior,
            x_true: Signal::new(x_true, vec![r, c], 2)?,
            seed,
        })
    }

    /// Noisy measurements `A x_true + η n` with noise from stream `stream`.
    pub fn measure(&self, eta: f64, stream: u64) -> Result<Signal> {
        simulate_measurements(&self.op, &self.x_true, eta, &mut Rng::new(self.seed).fork(stream))
    }

    pub fn dim(&self) -> usize {
        self.x_true.len()
    }

    /// Signal with the image layout of this toy.
    pub fn image(&self, data: Vec<f64>) -> Result<Signal> {
        Signal::new(data, vec![TEMPLATE_ROWS, TEMPLATE_COLS], 2)
    }
}

/// Network size and optimizer budget for a toy training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyTraining {
    pub width: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ToyTraining {
    /// Four layers of width 128, the architecture used for the 2-D toy.
    pub fn standard(epochs: usize, seed: u64) -> Self {
        Self {
            width: 128,
            depth: 4,
            epochs,
            batch_size: 128,
            learning_rate: 1e-3,
            seed,
        }
    }

    pub fn small(width: usize, epochs: usize, seed: u64) -> Self {
        Self {
            width,
            depth: 3,
            epochs,
            batch_size: 128,
            learning_rate: 1e-3,
            seed,
        }
    }

    /// Trains a fresh model of `kind` at `sigma`. Score-C models are
    /// spectrally normalized after every step.
    pub fn run(&self, kind: ModelKind, sigma: f64, data: &Dataset) -> Result<(Model, TrainReport)> {
        let model = ModelSpec::new(kind, self.width, self.depth).init(data.dim(), sigma, self.seed)?;
        let cfg = TrainConfig {
            sigma,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed.wrapping_add(1),
            spectral_norm_every: usize::from(kind.is_contractive()),
        };
        Ok(train(model, &cfg, data)?)
    }
}
