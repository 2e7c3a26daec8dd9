//! Isotropic Gaussian mixtures with closed-form Gaussian smoothing.
//!
//! Convolving a mixture with `N(0, σ² I)` adds `σ²` to every component
//! variance, so the smoothed density, its negative log and its gradient are
//! all available exactly. This is the ground truth the trained models and
//! solvers are checked against.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::energy::{Prior, ScoreField};
use crate::error::{invalid, MuseError, Result};
use crate::io::fmt_sig;
use crate::tensor::{Rng, Signal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len()
        {
            return invalid("mixture needs matching, non-empty weights, means and variances");
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return invalid("all means must share a positive dimension");
        }
        if weights.iter().any(|&w| !(w > 0.0)) || variances.iter().any(|&v| !(v > 0.0)) {
            return invalid("weights and variances must be positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("weights sum to {total}, expected 1"));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Four equally weighted clusters at `(±1, ±1)` with variance 0.01.
    pub fn four_cluster_toy() -> Self {
        let means = vec![
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
        ];
        Self::new(vec![0.25; 4], means, vec![0.01; 4]).expect("valid toy prior")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// The same mixture with every variance increased by `sigma²`.
    pub fn smoothed(&self, sigma: f64) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.iter().map(|v| v + sigma * sigma).collect(),
        }
    }

    /// Mean of the whole mixture.
    pub fn mixture_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m.iter_mut().zip(mu).for_each(|(a, b)| *a += w * b);
        }
        m
    }

    fn pick_component(&self, rng: &mut Rng) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    /// `n` draws, one per row.
    pub fn sample_matrix(&self, rng: &mut Rng, n: usize) -> Result<Array2<f64>> {
        if n == 0 {
            return invalid("sample count must be at least 1");
        }
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let k = self.pick_component(rng);
            let s = self.variances[k].sqrt();
            for j in 0..d {
                out[[i, j]] = self.means[k][j] + s * rng.normal();
            }
        }
        Ok(out)
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<Vec<Signal>> {
        let m = self.sample_matrix(rng, n)?;
        m.rows()
            .into_iter()
            .map(|r| Signal::from_vec(r.to_vec()))
            .collect()
    }

    fn check(&self, sigma: f64, x: &[f64]) -> Result<()> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be non-negative, got {sigma}"));
        }
        if x.len() != self.dim() {
            return invalid(format!(
                "point dimension {} does not match prior dimension {}",
                x.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// Per-component log of `π_k N(x; μ_k, (s_k² + σ²) I)`.
    fn log_terms(&self, sigma: f64, x: ArrayView1<f64>) -> Vec<f64> {
        let d = self.dim() as f64;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), s2)| {
                let v = s2 + sigma * sigma;
                let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - 0.5 * d * (LN_2PI + v.ln()) - sq / (2.0 * v)
            })
            .collect()
    }

    fn energy_and_score_unchecked(&self, sigma: f64, x: ArrayView1<f64>) -> (f64, Vec<f64>) {
        let terms = self.log_terms(sigma, x);
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let resp: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
        let total: f64 = resp.iter().sum();
        let energy = -(max + total.ln());

        let mut score = vec![0.0; self.dim()];
        for ((r, mu), s2) in resp.iter().zip(&self.means).zip(&self.variances) {
            let w = r / total / (s2 + sigma * sigma);
            score
                .iter_mut()
                .zip(x.iter().zip(mu))
                .for_each(|(s, (a, b))| *s += w * (a - b));
        }
        (energy, score)
    }

    /// `−log p_σ(x)`, normalization constants included.
    pub fn smoothed_energy(&self, sigma: f64, x: &[f64]) -> Result<f64> {
        self.check(sigma, x)?;
        Ok(self.energy_and_score_unchecked(sigma, ArrayView1::from(x)).0)
    }

    /// `−∇ log p_σ(x) = Σ_k w_k(x) (x − μ_k) / (s_k² + σ²)`.
    pub fn smoothed_score(&self, sigma: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check(sigma, x)?;
        Ok(self.energy_and_score_unchecked(sigma, ArrayView1::from(x)).1)
    }

    /// `p_σ(x)`.
    pub fn smoothed_density(&self, sigma: f64, x: &[f64]) -> Result<f64> {
        Ok((-self.smoothed_energy(sigma, x)?).exp())
    }
}

/// A mixture prior viewed as a MAP energy at scale `σ`.
///
/// Energy and score are `σ² (−log p_σ)` and `σ² (−∇ log p_σ)`, the scaling a
/// perfectly trained denoising-score-matching model converges to.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmEnergy {
    pub prior: GmmPrior,
    pub sigma: f64,
}

impl GmmEnergy {
    pub fn new(prior: GmmPrior, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        Ok(Self { prior, sigma })
    }

    /// Upper bound on the curvature of the energy: `σ² / min_k (s_k² + σ²)`.
    ///
    /// The Hessian of `−log p_σ` is `Σ w_k I / v_k` minus a covariance term,
    /// so it never exceeds `I / min v_k`. This one-sided bound is all the
    /// descent and majorization arguments need.
    pub fn curvature_bound(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        let vmin = self
            .prior
            .variances()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        s2 / (vmin + s2)
    }

    /// Lipschitz constant bound of the score for equal component variances.
    ///
    /// The Hessian of `−log p_σ` is `I/v − Cov_w(μ)/v²`. A weighted covariance
    /// of the means has norm at most `D²/4` with `D` the largest distance
    /// between two means, so the eigenvalues lie in `[1/v − D²/(4v²), 1/v]`.
    /// Returns `None` when the variances differ.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        let vars = self.prior.variances();
        if vars.iter().any(|&v| v != vars[0]) {
            return None;
        }
        let v = vars[0] + self.sigma * self.sigma;
        let means = self.prior.means();
        let mut d2 = 0.0_f64;
        for (i, a) in means.iter().enumerate() {
            for b in &means[i + 1..] {
                d2 = d2.max(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum());
            }
        }
        let upper = 1.0 / v;
        let lower = upper - d2 / (4.0 * v * v);
        Some(self.sigma * self.sigma * upper.max(-lower))
    }
}

impl ScoreField for GmmEnergy {
    fn input_dim(&self) -> usize {
        self.prior.dim()
    }

    fn score_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return invalid("point dimension does not match prior");
        }
        let s2 = self.sigma * self.sigma;
        let mut out = Array2::zeros(x.raw_dim());
        for (i, row) in x.rows().into_iter().enumerate() {
            let (_, h) = self.prior.energy_and_score_unchecked(self.sigma, row);
            out.row_mut(i)
                .iter_mut()
                .zip(h)
                .for_each(|(o, v)| *o = s2 * v);
        }
        Ok(out)
    }

    fn energy_batch(&self, x: ArrayView2<f64>) -> Result<Option<Array1<f64>>> {
        if x.ncols() != self.input_dim() {
            return invalid("point dimension does not match prior");
        }
        let s2 = self.sigma * self.sigma;
        Ok(Some(
            x.rows()
                .into_iter()
                .map(|row| s2 * self.prior.energy_and_score_unchecked(self.sigma, row).0)
                .collect(),
        ))
    }
}

impl Prior for GmmEnergy {
    fn energy(&self, x: &Signal) -> Result<f64> {
        Ok(self.sigma * self.sigma * self.prior.smoothed_energy(self.sigma, x.as_slice())?)
    }

    fn energy_and_score(&self, x: &Signal) -> Result<(f64, Signal)> {
        self.prior.check(self.sigma, x.as_slice())?;
        let s2 = self.sigma * self.sigma;
        let (e, h) = self
            .prior
            .energy_and_score_unchecked(self.sigma, ArrayView1::from(x.as_slice()));
        Ok((s2 * e, x.with_data(h.into_iter().map(|v| s2 * v).collect())))
    }
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn square(half: f64) -> Self {
        Self {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }

    fn grid(&self, resolution: usize) -> Result<Array2<f64>> {
        if resolution < 2 {
            return invalid("grid resolution must be at least 2");
        }
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.x_min, self.x_max) || !ok(self.y_min, self.y_max) {
            return invalid(format!("degenerate bounds {self:?}"));
        }
        let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
        Ok(Array2::from_shape_fn((resolution * resolution, 2), |(n, c)| {
            let (iy, ix) = (n / resolution, n % resolution);
            if c == 0 {
                step(self.x_min, self.x_max, ix)
            } else {
                step(self.y_min, self.y_max, iy)
            }
        }))
    }
}

/// One node of an exported field grid, in MAP units (divided by `σ²`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub energy: Option<f64>,
    pub score_x: f64,
    pub score_y: f64,
}

/// Evaluate a 2-D field on a `resolution × resolution` grid, dividing energy
/// and score by `σ²`. Rows run x-fastest.
pub fn field_grid_export(
    field: &dyn ScoreField,
    bounds: Bounds,
    resolution: usize,
    sigma: f64,
) -> Result<Vec<FieldRow>> {
    if field.input_dim() != 2 {
        return invalid("field export needs a 2-D field");
    }
    if !(sigma > 0.0) {
        return invalid("sigma must be positive");
    }
    let pts = bounds.grid(resolution)?;
    let h = field.score_batch(pts.view())?;
    let e = field.energy_batch(pts.view())?;
    let s2 = sigma * sigma;
    Ok((0..pts.nrows())
        .map(|i| FieldRow {
            x: pts[[i, 0]],
            y: pts[[i, 1]],
            energy: e.as_ref().map(|e| e[i] / s2),
            score_x: h[[i, 0]] / s2,
            score_y: h[[i, 1]] / s2,
        })
        .collect())
}

/// CSV with header `x,y,energy,score_x,score_y`; empty energy when absent.
pub fn write_field_csv(rows: &[FieldRow], path: &Path) -> Result<()> {
    let mut out = String::from("x,y,energy,score_x,score_y\n");
    for r in rows {
        let e = r.energy.map(fmt_sig).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig(r.x),
            fmt_sig(r.y),
            e,
            fmt_sig(r.score_x),
            fmt_sig(r.score_y)
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| MuseError::io(path, e))
}

/// Mean cosine similarity between a field and the oracle score over the grid
/// nodes where `p_σ ≥ density_fraction · max p_σ`.
pub fn score_cosine_similarity(
    field: &dyn ScoreField,
    oracle: &GmmEnergy,
    bounds: Bounds,
    resolution: usize,
    density_fraction: f64,
) -> Result<f64> {
    let pts = bounds.grid(resolution)?;
    let density: Vec<f64> = pts
        .rows()
        .into_iter()
        .map(|r| oracle.prior.smoothed_density(oracle.sigma, r.as_slice().unwrap()))
        .collect::<Result<_>>()?;
    let max = density.iter().cloned().fold(0.0, f64::max);
    let model = field.score_batch(pts.view())?;
    let truth = oracle.score_batch(pts.view())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &d) in density.iter().enumerate() {
        if d < density_fraction * max {
            continue;
        }
        let (a, b) = (model.row(i), truth.row(i));
        let na = a.dot(&a).sqrt();
        let nb = b.dot(&b).sqrt();
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        sum += a.dot(&b) / (na * nb);
        count += 1;
    }
    if count == 0 {
        return invalid("no grid node lies in the high-density region");
    }
    Ok(sum / count as f64)
}
