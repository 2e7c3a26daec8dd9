//! Energy parameterizations, their chain-rule scores, and plain score
//! networks used as non-conservative baselines.
//!
//! | variant | energy                  | score                         |
//! |---------|-------------------------|-------------------------------|
//! | E1      | `1/2 ‖x − Ψ(x)‖²`       | `r − J_Ψ(x)^T r`, `r = x − Ψ(x)` |
//! | E2      | `Φ(x)`                  | `∇Φ(x)`                       |
//! | E3      | `1/2 ‖x‖² − Φ(x)`       | `x − ∇Φ(x)`                   |
//!
//! Energies are stored unscaled; the `1/σ²` factor is applied by the MAP
//! objective.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, MuseError, Result};
use crate::nn::MlpParams;
use crate::tensor::{Rng, Signal};

/// Power iterations used for layer norms in Lipschitz bounds.
const NORM_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnergyVariant {
    E1,
    E2,
    E3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreVariant {
    /// No constraint on the network.
    Unconstrained,
    /// Every layer spectrally normalized.
    Contractive,
}

/// Any trainable model, tagged the way checkpoints store it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Energy(EnergyVariant),
    Score(ScoreVariant),
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Energy(EnergyVariant::E1) => 0,
            ModelKind::Energy(EnergyVariant::E2) => 1,
            ModelKind::Energy(EnergyVariant::E3) => 2,
            ModelKind::Score(ScoreVariant::Unconstrained) => 3,
            ModelKind::Score(ScoreVariant::Contractive) => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ModelKind::Energy(EnergyVariant::E1),
            1 => ModelKind::Energy(EnergyVariant::E2),
            2 => ModelKind::Energy(EnergyVariant::E3),
            3 => ModelKind::Score(ScoreVariant::Unconstrained),
            4 => ModelKind::Score(ScoreVariant::Contractive),
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Energy(EnergyVariant::E1) => "e1",
            ModelKind::Energy(EnergyVariant::E2) => "e2",
            ModelKind::Energy(EnergyVariant::E3) => "e3",
            ModelKind::Score(ScoreVariant::Unconstrained) => "score-u",
            ModelKind::Score(ScoreVariant::Contractive) => "score-c",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        (0..5)
            .filter_map(ModelKind::from_code)
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }

    /// Score-C, the only kind trained under spectral normalization.
    pub fn is_contractive(self) -> bool {
        self == ModelKind::Score(ScoreVariant::Contractive)
    }
}

/// A vector field over flat signals.
pub trait ScoreField {
    fn input_dim(&self) -> usize;

    /// Score of every row of `x`.
    fn score_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Energy of every row, when the field has one.
    fn energy_batch(&self, _x: ArrayView2<f64>) -> Result<Option<Array1<f64>>> {
        Ok(None)
    }

    fn score(&self, x: &Signal) -> Result<Signal> {
        let h = self.score_batch(row_view(self.input_dim(), x)?)?;
        Ok(x.with_data(h.into_raw_vec_and_offset().0))
    }
}

/// A scalar energy with its gradient (the score).
pub trait Prior: ScoreField {
    fn energy(&self, x: &Signal) -> Result<f64>;

    fn energy_and_score(&self, x: &Signal) -> Result<(f64, Signal)> {
        Ok((self.energy(x)?, self.score(x)?))
    }
}

pub(crate) fn row_view(dim: usize, x: &Signal) -> Result<ArrayView2<'_, f64>> {
    if x.len() != dim {
        return invalid(format!(
            "signal length {} does not match model input dimension {dim}",
            x.len()
        ));
    }
    Ok(ArrayView2::from_shape((1, dim), x.as_slice()).expect("length checked"))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma must be positive and finite, got {sigma}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub variant: EnergyVariant,
    pub net: MlpParams,
    /// Noise scale the model was trained at.
    pub sigma: f64,
}

impl EnergyModel {
    pub fn new(variant: EnergyVariant, net: MlpParams, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        match variant {
            EnergyVariant::E1 => {
                if net.scalar_head.is_some() {
                    return invalid("E1 uses a residual network without a scalar head");
                }
                if net.input_dim() != net.output_dim() {
                    return invalid("E1 network must map x to an x-shaped residual");
                }
            }
            EnergyVariant::E2 | EnergyVariant::E3 => {
                if net.scalar_head.is_none() {
                    return invalid("E2/E3 need a network with a scalar head");
                }
            }
        }
        Ok(Self {
            variant,
            net,
            sigma,
        })
    }

    /// Both energy and score of every row with one forward pass.
    pub fn energy_and_score_batch(
        &self,
        x: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        let (y, cache) = self.net.forward_batch(x)?;
        match self.variant {
            EnergyVariant::E1 => {
                let r = &x - &y;
                let g = self.net.vjp_input_batch(&cache, r.view())?;
                let energy = r.map_axis(Axis(1), |row| 0.5 * row.dot(&row));
                Ok((energy, r - g))
            }
            EnergyVariant::E2 => {
                let ones = Array2::ones((x.nrows(), 1));
                let g = self.net.vjp_input_batch(&cache, ones.view())?;
                Ok((y.column(0).to_owned(), g))
            }
            EnergyVariant::E3 => {
                let ones = Array2::ones((x.nrows(), 1));
                let g = self.net.vjp_input_batch(&cache, ones.view())?;
                let sq = x.map_axis(Axis(1), |row| 0.5 * row.dot(&row));
                Ok((sq - y.column(0), &x - &g))
            }
        }
    }

    /// Upper bound on the Lipschitz constant of the score from per-layer
    /// spectral norms.
    ///
    /// With `B` the product of layer norms: E1 gives `(1 + B)²` from
    /// `H = (I − J^T)(I − Ψ)`; E2 gives `B²` and E3 `1 + B²`, counting the
    /// shared weights once in each half of the mirrored network.
    pub fn layer_product_bound(&self) -> f64 {
        let b: f64 = self
            .net
            .layer_norms(NORM_ITERS, &mut Rng::new(0x5eed))
            .iter()
            .product();
        match self.variant {
            EnergyVariant::E1 => (1.0 + b) * (1.0 + b),
            EnergyVariant::E2 => b * b,
            EnergyVariant::E3 => 1.0 + b * b,
        }
    }
}

impl ScoreField for EnergyModel {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn score_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.energy_and_score_batch(x)?.1)
    }

    fn energy_batch(&self, x: ArrayView2<f64>) -> Result<Option<Array1<f64>>> {
        Ok(Some(self.energy_and_score_batch(x)?.0))
    }
}

impl Prior for EnergyModel {
    fn energy(&self, x: &Signal) -> Result<f64> {
        let (y, _) = self.net.forward_batch(row_view(self.input_dim(), x)?)?;
        let xs = x.as_slice();
        Ok(match self.variant {
            EnergyVariant::E1 => {
                0.5 * xs
                    .iter()
                    .zip(y.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            }
            EnergyVariant::E2 => y[[0, 0]],
            EnergyVariant::E3 => 0.5 * x.dot(x) - y[[0, 0]],
        })
    }

    fn energy_and_score(&self, x: &Signal) -> Result<(f64, Signal)> {
        let (e, h) = self.energy_and_score_batch(row_view(self.input_dim(), x)?)?;
        Ok((e[0], x.with_data(h.into_raw_vec_and_offset().0)))
    }
}

/// Score network evaluated directly, with no energy behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBaseline {
    pub variant: ScoreVariant,
    pub net: MlpParams,
    pub sigma: f64,
}

impl ScoreBaseline {
    pub fn new(variant: ScoreVariant, net: MlpParams, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if net.scalar_head.is_some() || net.input_dim() != net.output_dim() {
            return invalid("score network must map x to an x-shaped output");
        }
        Ok(Self {
            variant,
            net,
            sigma,
        })
    }

    /// Product of per-layer spectral norms.
    pub fn layer_product_bound(&self) -> f64 {
        self.net
            .layer_norms(NORM_ITERS, &mut Rng::new(0x5eed))
            .iter()
            .product()
    }

    /// True when every layer's spectral norm is at most `1 + tol`.
    pub fn is_contractive(&self, tol: f64) -> bool {
        self.net
            .layer_norms(NORM_ITERS, &mut Rng::new(0x5eed))
            .iter()
            .all(|&s| s <= 1.0 + tol)
    }
}

impl ScoreField for ScoreBaseline {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn score_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.net.forward_batch(x)?.0)
    }
}

/// A trainable model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Energy(EnergyModel),
    Score(ScoreBaseline),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Energy(m) => ModelKind::Energy(m.variant),
            Model::Score(m) => ModelKind::Score(m.variant),
        }
    }

    pub fn net(&self) -> &MlpParams {
        match self {
            Model::Energy(m) => &m.net,
            Model::Score(m) => &m.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut MlpParams {
        match self {
            Model::Energy(m) => &mut m.net,
            Model::Score(m) => &mut m.net,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Model::Energy(m) => m.sigma,
            Model::Score(m) => m.sigma,
        }
    }

    pub fn from_parts(kind: ModelKind, net: MlpParams, sigma: f64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Energy(v) => Model::Energy(EnergyModel::new(v, net, sigma)?),
            ModelKind::Score(v) => Model::Score(ScoreBaseline::new(v, net, sigma)?),
        })
    }

    pub fn layer_product_bound(&self) -> f64 {
        match self {
            Model::Energy(m) => m.layer_product_bound(),
            Model::Score(m) => m.layer_product_bound(),
        }
    }

    pub fn as_energy(&self) -> Option<&EnergyModel> {
        match self {
            Model::Energy(m) => Some(m),
            Model::Score(_) => None,
        }
    }

    pub fn as_score(&self) -> Option<&ScoreBaseline> {
        match self {
            Model::Score(m) => Some(m),
            Model::Energy(_) => None,
        }
    }

    pub fn as_field(&self) -> &dyn ScoreField {
        match self {
            Model::Energy(m) => m,
            Model::Score(m) => m,
        }
    }
}

/// Architecture of a freshly initialized model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub width: usize,
    /// Number of layers before the output (E1/score) or before the scalar
    /// head (E2/E3).
    pub depth: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, width: usize, depth: usize) -> Self {
        Self { kind, width, depth }
    }

    pub fn init(&self, dim: usize, sigma: f64, seed: u64) -> Result<Model> {
        if self.width == 0 || self.depth == 0 || dim == 0 {
            return invalid("model width, depth and input dimension must be positive");
        }
        let mut rng = Rng::new(seed);
        let net = match self.kind {
            ModelKind::Energy(EnergyVariant::E1) | ModelKind::Score(_) => {
                MlpParams::residual_net(dim, self.width, self.depth, &mut rng)
            }
            ModelKind::Energy(_) => MlpParams::scalar_net(dim, self.width, self.depth, &mut rng),
        };
        Model::from_parts(self.kind, net, sigma)
    }
}

/// `∫ H · dl` along a polyline by composite midpoint quadrature.
///
/// `steps` midpoints are shared between segments in proportion to their
/// length. For a conservative field the result is `E(end) − E(start)`.
pub fn line_integral(field: &dyn ScoreField, path: &[Signal], steps: usize) -> Result<f64> {
    if path.len() < 2 {
        return invalid("path needs at least two vertices");
    }
    if steps < 10 {
        return invalid("line integral needs at least 10 steps");
    }
    let dim = field.input_dim();
    if path.iter().any(|p| p.len() != dim) {
        return invalid("path vertices do not match the field dimension");
    }
    let lengths: Vec<f64> = path.windows(2).map(|w| w[0].distance(&w[1])).collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }

    let mut sum = 0.0;
    for (seg, len) in path.windows(2).zip(&lengths) {
        if *len == 0.0 {
            continue;
        }
        let n = ((steps as f64) * len / total).round().max(1.0) as usize;
        let (a, b) = (seg[0].as_slice(), seg[1].as_slice());
        let mids = Array2::from_shape_fn((n, dim), |(i, j)| {
            let t = (i as f64 + 0.5) / n as f64;
            a[j] + t * (b[j] - a[j])
        });
        let h = field.score_batch(mids.view())?;
        let delta: Array1<f64> = (0..dim).map(|j| (b[j] - a[j]) / n as f64).collect();
        sum += h.dot(&delta).sum();
    }
    Ok(sum)
}

/// Closed axis-aligned square loop in the plane of coordinates `i`, `j`,
/// traversed counter-clockwise starting at the lower-left corner.
pub fn square_loop(center: &Signal, i: usize, j: usize, half_side: f64) -> Vec<Signal> {
    let corner = |di: f64, dj: f64| {
        let mut p = center.clone();
        p.as_mut_slice()[i] += di * half_side;
        p.as_mut_slice()[j] += dj * half_side;
        p
    };
    vec![
        corner(-1.0, -1.0),
        corner(1.0, -1.0),
        corner(1.0, 1.0),
        corner(-1.0, 1.0),
        corner(-1.0, -1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzMethod {
    /// Largest observed difference quotient over random nearby pairs; a
    /// lower bound on the true constant.
    PairwiseEmpirical,
    /// Product of layer spectral norms; an upper bound.
    LayerProduct,
}

/// Lipschitz constant of a model's score.
///
/// For the pairwise method, each pair is `x = a + σ z₁`, `y = a + σ z₂` with
/// `a` drawn from `anchors` and `σ` the model's training scale.
pub fn lipschitz_estimate(
    model: &Model,
    method: LipschitzMethod,
    anchors: &[Signal],
    rng: &mut Rng,
    samples: usize,
) -> Result<f64> {
    match method {
        LipschitzMethod::LayerProduct => Ok(model.layer_product_bound()),
        LipschitzMethod::PairwiseEmpirical => {
            pairwise_lipschitz(model.as_field(), anchors, model.sigma(), rng, samples)
        }
    }
}

/// Empirical Lipschitz estimate of any score field; see [`lipschitz_estimate`].
pub fn pairwise_lipschitz(
    field: &dyn ScoreField,
    anchors: &[Signal],
    spread: f64,
    rng: &mut Rng,
    samples: usize,
) -> Result<f64> {
    if samples < 2 {
        return invalid("pairwise Lipschitz estimate needs at least 2 samples");
    }
    if anchors.is_empty() {
        return invalid("pairwise Lipschitz estimate needs anchor points");
    }
    let dim = field.input_dim();
    if anchors.iter().any(|a| a.len() != dim) {
        return invalid("anchor dimension does not match the field");
    }
    let mut xs = Array2::zeros((samples, dim));
    let mut ys = Array2::zeros((samples, dim));
    for s in 0..samples {
        let a = anchors[rng.below(anchors.len())].as_slice();
        for j in 0..dim {
            xs[[s, j]] = a[j] + spread * rng.normal();
            ys[[s, j]] = a[j] + spread * rng.normal();
        }
    }
    let hx = field.score_batch(xs.view())?;
    let hy = field.score_batch(ys.view())?;
    let mut best = 0.0_f64;
    for s in 0..samples {
        let dx = (&xs.row(s) - &ys.row(s)).mapv(|v| v * v).sum().sqrt();
        if dx == 0.0 {
            continue;
        }
        let dh = (&hx.row(s) - &hy.row(s)).mapv(|v| v * v).sum().sqrt();
        best = best.max(dh / dx);
    }
    if !best.is_finite() {
        return Err(MuseError::InvalidState("non-finite Lipschitz estimate".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::array;

    fn zero_residual(dim: usize) -> MlpParams {
        let mut rng = Rng::new(0);
        MlpParams::residual_net(dim, 4, 2, &mut rng).zeros_like()
    }

    fn zero_scalar(dim: usize) -> MlpParams {
        let mut rng = Rng::new(0);
        MlpParams::scalar_net(dim, 4, 2, &mut rng).zeros_like()
    }

    fn x34() -> Signal {
        Signal::from_vec(vec![3.0, 4.0]).unwrap()
    }

    #[test]
    fn quadratic_energies() {
        let e1 = EnergyModel::new(EnergyVariant::E1, zero_residual(2), 1.0).unwrap();
        let e3 = EnergyModel::new(EnergyVariant::E3, zero_scalar(2), 1.0).unwrap();
        assert_eq!(e1.energy(&x34()).unwrap(), 12.5);
        assert_eq!(e3.energy(&x34()).unwrap(), 12.5);
        assert_eq!(e1.score(&x34()).unwrap().as_slice(), &[3.0, 4.0]);
        assert_eq!(e3.score(&x34()).unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn variant_structure_is_validated() {
        assert!(EnergyModel::new(EnergyVariant::E1, zero_scalar(2), 1.0).is_err());
        assert!(EnergyModel::new(EnergyVariant::E2, zero_residual(2), 1.0).is_err());
        assert!(EnergyModel::new(EnergyVariant::E1, zero_residual(2), 0.0).is_err());
        assert!(ScoreBaseline::new(ScoreVariant::Unconstrained, zero_scalar(2), 1.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let e1 = EnergyModel::new(EnergyVariant::E1, zero_residual(2), 1.0).unwrap();
        let x = Signal::from_vec(vec![1.0; 3]).unwrap();
        assert!(matches!(e1.energy(&x), Err(MuseError::InvalidArgument(_))));
        assert!(matches!(e1.score(&x), Err(MuseError::InvalidArgument(_))));
    }

    #[test]
    fn baseline_outputs() {
        let zero = ScoreBaseline::new(ScoreVariant::Unconstrained, zero_residual(2), 1.0).unwrap();
        assert_eq!(zero.score(&x34()).unwrap().as_slice(), &[0.0, 0.0]);

        let ident = MlpParams::new(
            vec![Dense::new(Array2::eye(2), Array1::zeros(2), Activation::Identity).unwrap()],
            None,
        )
        .unwrap();
        let b = ScoreBaseline::new(ScoreVariant::Unconstrained, ident, 1.0).unwrap();
        let x = Signal::from_vec(vec![1.0, 2.0]).unwrap();
        assert_eq!(b.score(&x).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn straight_line_integral_of_quadratic() {
        let e1 = EnergyModel::new(EnergyVariant::E1, zero_residual(2), 1.0).unwrap();
        let path = [Signal::from_vec(vec![0.0, 0.0]).unwrap(), x34()];
        let v = line_integral(&e1, &path, 1000).unwrap();
        assert!((v - 12.5).abs() < 1e-4, "{v}");
    }

    #[test]
    fn line_integral_arguments() {
        let e1 = EnergyModel::new(EnergyVariant::E1, zero_residual(2), 1.0).unwrap();
        assert!(line_integral(&e1, &[x34()], 100).is_err());
        assert!(line_integral(&e1, &[x34(), x34()], 5).is_err());
    }

    #[test]
    fn identity_score_lipschitz() {
        let model = Model::Energy(EnergyModel::new(EnergyVariant::E1, zero_residual(2), 0.5).unwrap());
        let anchors = vec![x34()];
        let mut rng = Rng::new(1);
        let emp =
            lipschitz_estimate(&model, LipschitzMethod::PairwiseEmpirical, &anchors, &mut rng, 64)
                .unwrap();
        let up = lipschitz_estimate(&model, LipschitzMethod::LayerProduct, &anchors, &mut rng, 64)
            .unwrap();
        assert!((emp - 1.0).abs() < 1e-6);
        assert!((up - 1.0).abs() < 1e-6);
        assert!(
            lipschitz_estimate(&model, LipschitzMethod::PairwiseEmpirical, &anchors, &mut rng, 1)
                .is_err()
        );
    }

    #[test]
    fn diagonal_layer_product() {
        let net = MlpParams::new(
            vec![Dense::new(array![[2.0, 0.0], [0.0, 0.5]], Array1::zeros(2), Activation::Identity)
                .unwrap()],
            None,
        )
        .unwrap();
        let model = Model::Score(ScoreBaseline::new(ScoreVariant::Unconstrained, net, 1.0).unwrap());
        assert!((model.layer_product_bound() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kind_codes_roundtrip() {
        for code in 0..5 {
            let k = ModelKind::from_code(code).unwrap();
            assert_eq!(k.code(), code);
            assert_eq!(ModelKind::parse(k.name()), Some(k));
        }
        assert_eq!(ModelKind::from_code(5), None);
    }
}
