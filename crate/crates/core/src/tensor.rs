//! Dense real signals, seeded randomness and spectral estimation.
//!
//! Complex-valued images are stored as two interleaved real channels
//! (`re, im, re, im, ...`). With that layout the real part of the complex
//! inner product `Re(u^H v)` is the plain dot product of the flat arrays,
//! so every solver works unchanged on real and complex problems.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MuseError, Result};

/// Flat array of `f64` with shape metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    shape: Vec<usize>,
    channels: usize,
}

/// Shape and channel layout of a [`Signal`], as stored in JSON sidecars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalLayout {
    pub shape: Vec<usize>,
    pub channels: usize,
}

impl SignalLayout {
    pub fn len(&self) -> usize {
        self.channels * self.shape.iter().product::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same data viewed with this layout; lengths must agree.
    pub fn reshape(&self, s: Signal) -> Result<Signal> {
        if s.len() != self.len() {
            return invalid(format!(
                "signal of length {} does not fit layout {:?} x {}",
                s.len(),
                self.shape,
                self.channels
            ));
        }
        Signal::new(s.data, self.shape.clone(), self.channels)
    }
}

fn check_layout(shape: &[usize], channels: usize) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return invalid(format!("shape {shape:?} must be non-empty with positive dims"));
    }
    if channels != 1 && channels != 2 {
        return invalid(format!("channels must be 1 or 2, got {channels}"));
    }
    Ok(channels * shape.iter().product::<usize>())
}

impl Signal {
    pub fn new(data: Vec<f64>, shape: Vec<usize>, channels: usize) -> Result<Self> {
        let len = check_layout(&shape, channels)?;
        if data.len() != len {
            return invalid(format!(
                "data length {} does not match {channels} x {shape:?}",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite element at index {i}"));
        }
        Ok(Self {
            data,
            shape,
            channels,
        })
    }

    /// A real 1-D signal.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(data, vec![n], 1)
    }

    pub fn zeros(shape: &[usize], channels: usize) -> Result<Self> {
        let len = check_layout(shape, channels)?;
        Ok(Self {
            data: vec![0.0; len],
            shape: shape.to_vec(),
            channels,
        })
    }

    /// Same layout as `self`, new data. Panics on length mismatch.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len(), "signal length mismatch");
        Self {
            data,
            shape: self.shape.clone(),
            channels: self.channels,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_data(vec![0.0; self.data.len()])
    }

    pub fn layout(&self) -> SignalLayout {
        SignalLayout {
            shape: self.shape.clone(),
            channels: self.channels,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_complex(&self) -> bool {
        self.channels == 2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Signal) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn scaled(&self, alpha: f64) -> Signal {
        self.with_data(self.data.iter().map(|v| alpha * v).collect())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Signal) -> Signal {
        assert_eq!(self.len(), other.len(), "signal length mismatch");
        self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Signal) -> Signal {
        self.add_scaled(-1.0, other)
    }

    pub fn distance(&self, other: &Signal) -> f64 {
        assert_eq!(self.len(), other.len(), "signal length mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Seeded random stream. Identical seeds give bit-identical streams.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this rng's seed and a stream label.
    /// Does not advance `self`.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Self {
            seed: self.seed,
            inner,
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

/// Signal of i.i.d. standard-normal entries.
pub fn gaussian_sample(rng: &mut Rng, shape: &[usize], channels: usize) -> Result<Signal> {
    let len = check_layout(shape, channels)?;
    Ok(Signal {
        data: rng.normal_vec(len),
        shape: shape.to_vec(),
        channels,
    })
}

/// Largest singular value of a linear map given as a forward/adjoint pair.
///
/// Power iteration on `A^H A` from a seeded random start vector. Stops after
/// `iters` iterations or once the Rayleigh quotient changes by less than
/// `1e-10` relative. The Rayleigh quotient of a PSD matrix never exceeds its
/// top eigenvalue, so the estimate approaches the true norm from below.
pub fn spectral_norm_estimate(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    adjoint: &dyn Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    iters: usize,
    rng: &mut Rng,
) -> Result<f64> {
    power_iteration(apply, adjoint, dim, iters, 1e-10, rng)
}

pub(crate) fn power_iteration(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    adjoint: &dyn Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    iters: usize,
    rel_tol: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if dim == 0 {
        return invalid("power iteration on a zero-dimensional operator");
    }
    if iters == 0 {
        return invalid("power iteration needs at least one iteration");
    }
    let mut v = rng.normal_vec(dim);
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut best = 0.0_f64;
    let mut prev = f64::NAN;
    for _ in 0..iters {
        let av = apply(&v);
        let u = adjoint(&av);
        if u.len() != dim {
            return Err(MuseError::InvalidArgument(format!(
                "adjoint returned length {} for domain dimension {dim}",
                u.len()
            )));
        }
        let rq = dot(&v, &u) / dot(&v, &v);
        best = best.max(rq);
        let un = norm(&u);
        if un == 0.0 {
            break;
        }
        if (rq - prev).abs() <= rel_tol * rq.abs() {
            break;
        }
        prev = rq;
        v = u.into_iter().map(|x| x / un).collect();
    }
    Ok(best.max(0.0).sqrt())
}
