//! Linear measurement operators and line masks.
//!
//! Every operator is scaled so its largest singular value is at most one.
//! The masked Fourier operator maps a complex image `[rows, cols]` to a
//! zero-filled k-space of the same shape: an orthonormal, centered 2-D DFT
//! followed by keeping only the sampled phase-encode lines (k-space rows).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{invalid, MuseError, Result};
use crate::io::{read_f64s, read_json, sidecar_path, write_f64s, write_json};
use crate::tensor::{power_iteration, Rng, Signal, SignalLayout};

/// Relative slack applied on top of the estimated norm when normalizing, so
/// the normalized norm lands at or just below one.
const NORM_SLACK: f64 = 1e-9;
const NORM_TOL: f64 = 1e-4;
const POWER_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum OperatorKind {
    Identity,
    Dense(Array2<f64>),
    MaskedDft(MaskedDft),
}

/// Centered orthonormal DFT on `[rows, cols]` images with a row mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDft {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    row_re: Array2<f64>,
    row_im: Array2<f64>,
    col_re: Array2<f64>,
    col_im: Array2<f64>,
}

/// `F[k, n] = exp(−2πi (k − N/2) n / N) / √N`, so the zero frequency sits at
/// index `N/2`.
fn centered_dft(n: usize) -> (Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (n as f64).sqrt();
    let half = (n / 2) as i64;
    let phase = |k: usize, j: usize| {
        let f = k as i64 - half;
        // reduce the product modulo n before converting to an angle
        let p = (f * j as i64).rem_euclid(n as i64) as f64;
        -2.0 * PI * p / n as f64
    };
    (
        Array2::from_shape_fn((n, n), |(k, j)| scale * phase(k, j).cos()),
        Array2::from_shape_fn((n, n), |(k, j)| scale * phase(k, j).sin()),
    )
}

fn split_complex(x: &Signal, rows: usize, cols: usize) -> (Array2<f64>, Array2<f64>) {
    let d = x.as_slice();
    (
        Array2::from_shape_fn((rows, cols), |(i, j)| d[2 * (i * cols + j)]),
        Array2::from_shape_fn((rows, cols), |(i, j)| d[2 * (i * cols + j) + 1]),
    )
}

fn join_complex(re: &Array2<f64>, im: &Array2<f64>) -> Vec<f64> {
    re.iter().zip(im.iter()).flat_map(|(a, b)| [*a, *b]).collect()
}

impl MaskedDft {
    pub fn new(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("image dimensions must be positive");
        }
        if mask.len() != rows {
            return invalid(format!("mask has {} lines for {rows} image rows", mask.len()));
        }
        if !mask.iter().any(|&m| m) {
            return invalid("mask samples no lines");
        }
        let (row_re, row_im) = centered_dft(rows);
        let (col_re, col_im) = centered_dft(cols);
        Ok(Self {
            rows,
            cols,
            mask,
            row_re,
            row_im,
            col_re,
            col_im,
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn image_shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    fn forward(&self, x: &Signal) -> Vec<f64> {
        let (xr, xi) = split_complex(x, self.rows, self.cols);
        // Y = F_r X F_c^T
        let (ar, ai) = (
            self.row_re.dot(&xr) - self.row_im.dot(&xi),
            self.row_re.dot(&xi) + self.row_im.dot(&xr),
        );
        let (ct_re, ct_im) = (self.col_re.t(), self.col_im.t());
        let mut yr = ar.dot(&ct_re) - ai.dot(&ct_im);
        let mut yi = ar.dot(&ct_im) + ai.dot(&ct_re);
        self.apply_mask(&mut yr, &mut yi);
        join_complex(&yr, &yi)
    }

    fn adjoint(&self, y: &Signal) -> Vec<f64> {
        let (mut yr, mut yi) = split_complex(y, self.rows, self.cols);
        self.apply_mask(&mut yr, &mut yi);
        // X = F_r^H Y conj(F_c)
        let (rt_re, rt_im) = (self.row_re.t(), self.row_im.t());
        let ar = rt_re.dot(&yr) + rt_im.dot(&yi);
        let ai = rt_re.dot(&yi) - rt_im.dot(&yr);
        let xr = ar.dot(&self.col_re) + ai.dot(&self.col_im);
        let xi = ai.dot(&self.col_re) - ar.dot(&self.col_im);
        join_complex(&xr, &xi)
    }

    fn apply_mask(&self, re: &mut Array2<f64>, im: &mut Array2<f64>) {
        for (k, &keep) in self.mask.iter().enumerate() {
            if !keep {
                re.row_mut(k).fill(0.0);
                im.row_mut(k).fill(0.0);
            }
        }
    }
}

/// A linear map `A` with adjoint `A^H`, both scaled by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    kind: OperatorKind,
    scale: f64,
    domain: SignalLayout,
    range: SignalLayout,
}

impl LinearOperator {
    /// Identity on signals with the given layout.
    pub fn identity(shape: &[usize], channels: usize) -> Result<Self> {
        let layout = Signal::zeros(shape, channels)?.layout();
        Ok(Self {
            kind: OperatorKind::Identity,
            scale: 1.0,
            domain: layout.clone(),
            range: layout,
        })
    }

    /// Real matrix acting on flat real vectors, normalized to unit norm.
    pub fn dense(matrix: Array2<f64>, rng: &mut Rng) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows == 0 || cols == 0 {
            return invalid("dense operator needs a non-empty matrix");
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return invalid("dense operator has non-finite entries");
        }
        let mut op = Self {
            kind: OperatorKind::Dense(matrix.as_standard_layout().into_owned()),
            scale: 1.0,
            domain: SignalLayout {
                shape: vec![cols],
                channels: 1,
            },
            range: SignalLayout {
                shape: vec![rows],
                channels: 1,
            },
        };
        let s = op.norm_estimate(rng, 1e-15)?;
        if s == 0.0 {
            return invalid("dense operator is zero");
        }
        op.scale = 1.0 / (s * (1.0 + NORM_SLACK));
        Ok(op)
    }

    /// I.i.d. standard-normal `rows x cols` matrix, normalized.
    pub fn dense_gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Result<Self> {
        let m = Array2::from_shape_fn((rows, cols), |_| rng.normal());
        Self::dense(m, &mut rng.fork(1))
    }

    /// Masked orthonormal DFT on complex `[rows, cols]` images.
    ///
    /// A row projection composed with an isometry already has unit norm, so
    /// no rescaling is applied; construction only verifies it.
    pub fn masked_dft(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        let layout = SignalLayout {
            shape: vec![rows, cols],
            channels: 2,
        };
        let op = Self {
            kind: OperatorKind::MaskedDft(MaskedDft::new(rows, cols, mask)?),
            scale: 1.0,
            domain: layout.clone(),
            range: layout,
        };
        let s = op.norm_estimate(&mut Rng::new(0x0dd), 1e-12)?;
        if !(1.0 - NORM_TOL..=1.0 + 1e-9).contains(&s) {
            return Err(MuseError::InvalidState(format!(
                "masked DFT norm {s} is not one"
            )));
        }
        Ok(op)
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            OperatorKind::Identity => "identity",
            OperatorKind::Dense(_) => "dense",
            OperatorKind::MaskedDft(_) => "masked-dft",
        }
    }

    /// Factor applied to both `A` and `A^H`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn domain(&self) -> &SignalLayout {
        &self.domain
    }

    pub fn range(&self) -> &SignalLayout {
        &self.range
    }

    fn check(&self, x: &Signal, layout: &SignalLayout, what: &str) -> Result<()> {
        if x.len() != layout.len() || x.channels() != layout.channels {
            return invalid(format!(
                "{what} expects {:?} x {} channel(s), got {:?} x {}",
                layout.shape,
                layout.channels,
                x.shape(),
                x.channels()
            ));
        }
        Ok(())
    }

    fn raw_apply(&self, x: &Signal) -> Vec<f64> {
        match &self.kind {
            OperatorKind::Identity => x.as_slice().to_vec(),
            OperatorKind::Dense(m) => m.dot(&ArrayView1::from(x.as_slice())).to_vec(),
            OperatorKind::MaskedDft(f) => f.forward(x),
        }
    }

    fn raw_adjoint(&self, y: &Signal) -> Vec<f64> {
        match &self.kind {
            OperatorKind::Identity => y.as_slice().to_vec(),
            OperatorKind::Dense(m) => m.t().dot(&ArrayView1::from(y.as_slice())).to_vec(),
            OperatorKind::MaskedDft(f) => f.adjoint(y),
        }
    }

    fn wrap(layout: &SignalLayout, mut data: Vec<f64>, scale: f64) -> Signal {
        if scale != 1.0 {
            data.iter_mut().for_each(|v| *v *= scale);
        }
        Signal::new(data, layout.shape.clone(), layout.channels).expect("operator output layout")
    }

    pub fn apply(&self, x: &Signal) -> Result<Signal> {
        self.check(x, &self.domain, "apply")?;
        Ok(Self::wrap(&self.range, self.raw_apply(x), self.scale))
    }

    pub fn adjoint(&self, y: &Signal) -> Result<Signal> {
        self.check(y, &self.range, "adjoint")?;
        Ok(Self::wrap(&self.domain, self.raw_adjoint(y), self.scale))
    }

    /// `A^H A x`.
    pub fn normal(&self, x: &Signal) -> Result<Signal> {
        self.adjoint(&self.apply(x)?)
    }

    fn norm_estimate(&self, rng: &mut Rng, tol: f64) -> Result<f64> {
        let domain = &self.domain;
        let range = &self.range;
        let mk = |l: &SignalLayout, v: &[f64]| {
            Signal::new(v.to_vec(), l.shape.clone(), l.channels).expect("layout")
        };
        let apply = |v: &[f64]| self.raw_apply(&mk(domain, v));
        let adjoint = |v: &[f64]| self.raw_adjoint(&mk(range, v));
        Ok(self.scale * power_iteration(&apply, &adjoint, domain.len(), POWER_ITERS, tol, rng)?)
    }

    /// Power-iteration estimate of the largest singular value.
    pub fn spectral_norm(&self, rng: &mut Rng) -> Result<f64> {
        self.norm_estimate(rng, 1e-13)
    }

    /// Entries of the range that carry measurements (all but the unsampled
    /// lines of a masked DFT).
    pub fn measured(&self) -> Vec<bool> {
        match &self.kind {
            OperatorKind::MaskedDft(f) => f
                .mask
                .iter()
                .flat_map(|&m| std::iter::repeat_n(m, 2 * f.cols))
                .collect(),
            _ => vec![true; self.range.len()],
        }
    }

    /// Write a dense operator's effective matrix and its sidecar.
    pub fn save_dense(&self, path: &Path) -> Result<()> {
        let OperatorKind::Dense(m) = &self.kind else {
            return invalid("only dense operators are stored as matrices");
        };
        let data: Vec<f64> = m.iter().map(|v| v * self.scale).collect();
        write_f64s(path, &data)?;
        write_json(
            &sidecar_path(path),
            &SignalLayout {
                shape: vec![m.nrows(), m.ncols()],
                channels: 1,
            },
        )
    }

    /// Load a stored matrix; it is re-normalized on construction.
    pub fn load_dense(path: &Path) -> Result<Self> {
        let layout: SignalLayout = read_json(&sidecar_path(path))?;
        let [rows, cols] = layout.shape[..] else {
            return Err(MuseError::format(path, "dense operator shape must be [rows, cols]"));
        };
        let data = read_f64s(path)?;
        let m = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| MuseError::format(path, e.to_string()))?;
        Self::dense(m, &mut Rng::new(0))
    }
}

/// 1-D variable-density line mask parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub num_lines: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn budget(&self) -> usize {
        (self.num_lines as f64 / self.acceleration).round() as usize
    }

    pub fn center_lines(&self) -> usize {
        // tolerate products like 0.1 * 30 = 3.0000000000000004
        ((self.center_fraction * self.num_lines as f64) - 1e-9).ceil().max(0.0) as usize
    }

    /// First index of the fully sampled center block.
    pub fn center_start(&self) -> usize {
        (self.num_lines / 2).saturating_sub(self.center_lines() / 2)
    }
}

/// Draw a line mask: the center block is always sampled and the remaining
/// budget is drawn without replacement with weight `(1 + |k| / w)^−2`, where
/// `k` is the distance from the center line and `w = max(1, center / 2)`.
pub fn generate_vd_mask(spec: &MaskSpec) -> Result<Vec<bool>> {
    if spec.num_lines == 0 {
        return invalid("mask needs at least one line");
    }
    if !(spec.acceleration >= 1.0 && spec.acceleration.is_finite()) {
        return invalid(format!("acceleration must be at least 1, got {}", spec.acceleration));
    }
    if !(0.0..=1.0).contains(&spec.center_fraction) {
        return invalid("center_fraction must lie in [0, 1]");
    }
    let n = spec.num_lines;
    let budget = spec.budget();
    let center = spec.center_lines();
    if budget < center || budget == 0 {
        return invalid(format!(
            "budget of {budget} lines cannot cover the {center}-line center block"
        ));
    }
    let mut mask = vec![false; n];
    let start = spec.center_start();
    mask[start..start + center].iter_mut().for_each(|m| *m = true);

    let width = (center as f64 / 2.0).max(1.0);
    let mid = (n / 2) as f64;
    let mut weights: Vec<f64> = (0..n)
        .map(|k| {
            if mask[k] {
                0.0
            } else {
                (1.0 + (k as f64 - mid).abs() / width).powi(-2)
            }
        })
        .collect();
    let mut rng = Rng::new(spec.seed);
    for _ in center..budget {
        let total: f64 = weights.iter().sum();
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (k, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            acc += w;
            pick = Some(k);
            if target < acc {
                break;
            }
        }
        let k = pick.expect("unsampled lines remain");
        mask[k] = true;
        weights[k] = 0.0;
    }
    Ok(mask)
}

/// One `0`/`1` per line.
pub fn write_mask_csv(mask: &[bool], path: &Path) -> Result<()> {
    let text: String = mask.iter().map(|&m| if m { "1\n" } else { "0\n" }).collect();
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| MuseError::io(path, e))
}

pub fn read_mask_csv(path: &Path) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| MuseError::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| match l {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(MuseError::format(path, format!("line {}: `{other}` is not 0 or 1", i + 1))),
        })
        .collect()
}

/// `b = A x + η n` with unit Gaussian `n` on every measured real channel.
pub fn simulate_measurements(
    op: &LinearOperator,
    x_true: &Signal,
    eta: f64,
    rng: &mut Rng,
) -> Result<Signal> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return invalid(format!("eta must be non-negative, got {eta}"));
    }
    let mut b = op.apply(x_true)?;
    if eta > 0.0 {
        for (v, keep) in b.as_mut_slice().iter_mut().zip(op.measured()) {
            if keep {
                *v += eta * rng.normal();
            }
        }
    }
    Ok(b)
}

/// Effective (scaled) matrix of a dense operator.
pub fn dense_matrix(op: &LinearOperator) -> Option<Array2<f64>> {
    match &op.kind {
        OperatorKind::Dense(m) => Some(m * op.scale),
        _ => None,
    }
}

/// Adjoint mismatch `|⟨Ax, y⟩ − ⟨x, A^H y⟩| / (‖x‖‖y‖)` for one random pair.
pub fn adjoint_mismatch(op: &LinearOperator, rng: &mut Rng) -> Result<f64> {
    let d = op.domain();
    let r = op.range();
    let x = Signal::new(rng.normal_vec(d.len()), d.shape.clone(), d.channels)?;
    let y = Signal::new(rng.normal_vec(r.len()), r.shape.clone(), r.channels)?;
    let lhs = op.apply(&x)?.dot(&y);
    let rhs = x.dot(&op.adjoint(&y)?);
    Ok((lhs - rhs).abs() / (x.norm() * y.norm()))
}

/// Real image lifted to a two-channel signal with zero imaginary part.
pub fn complex_from_real(re: &[f64], shape: &[usize]) -> Result<Signal> {
    let data: Vec<f64> = re.iter().flat_map(|&v| [v, 0.0]).collect();
    Signal::new(data, shape.to_vec(), 2)
}

/// Row sums of `|b|²` per mask line; used to check which k-space lines carry
/// energy.
pub fn line_energy(op: &LinearOperator, y: &Signal) -> Option<Array1<f64>> {
    let OperatorKind::MaskedDft(f) = &op.kind else {
        return None;
    };
    let d = y.as_slice();
    let row = 2 * f.cols;
    Some((0..f.rows).map(|k| d[k * row..(k + 1) * row].iter().map(|v| v * v).sum()).collect())
}
