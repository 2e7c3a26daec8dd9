//! Small fully-connected networks with exact reverse-mode derivatives.
//!
//! Rows of a batch matrix are samples. A layer computes
//! `a = h W^T + b` followed by an optional ReLU. Besides the usual
//! forward pass and vector-Jacobian product, [`MlpParams::vjp_adjoint_batch`]
//! differentiates the map `(theta, v) -> J(x)^T v` itself, which is what a
//! score defined through the chain rule needs during training. ReLU masks
//! recorded in the forward pass are treated as constants throughout; their
//! derivative vanishes almost everywhere.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, MuseError, Result};
use crate::tensor::{power_iteration, Rng, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Affine layer `x -> act(W x + b)` with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return invalid(format!(
                "bias length {} does not match {} weight rows",
                bias.len(),
                weight.nrows()
            ));
        }
        if weight.nrows() == 0 || weight.ncols() == 0 {
            return invalid("empty weight matrix");
        }
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias,
            activation,
        })
    }

    /// He-normal weights, zero bias.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let std = (2.0 / input as f64).sqrt();
        let weight = Array2::from_shape_fn((output, input), |_| std * rng.normal());
        Self {
            weight,
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
            activation: self.activation,
        }
    }

    /// Top singular value of the weight matrix by power iteration.
    pub fn spectral_norm(&self, iters: usize, rng: &mut Rng) -> f64 {
        let w = &self.weight;
        let apply = |x: &[f64]| w.dot(&ndarray::ArrayView1::from(x)).to_vec();
        let adjoint = |y: &[f64]| w.t().dot(&ndarray::ArrayView1::from(y)).to_vec();
        power_iteration(&apply, &adjoint, w.ncols(), iters.max(1), 1e-14, rng)
            .expect("weight dimensions are consistent")
    }
}

/// Parameters of a feed-forward network, optionally ending in a scalar head.
///
/// The same type holds parameter gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub scalar_head: Option<Dense>,
}

/// Intermediate values recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
    batch: usize,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn layer_count(&self) -> usize {
        self.shapes.len()
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Dense>, scalar_head: Option<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("network needs at least one layer");
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return invalid(format!(
                    "layer dimensions do not chain: {} -> {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                ));
            }
        }
        if let Some(head) = &scalar_head {
            if head.output_dim() != 1 {
                return invalid("scalar head must have output dimension 1");
            }
            if head.input_dim() != layers.last().unwrap().output_dim() {
                return invalid("scalar head input does not match last layer");
            }
        }
        Ok(Self {
            layers,
            scalar_head,
        })
    }

    /// `depth` layers of `width` units mapping `dim -> dim`, ReLU after every
    /// layer but the last.
    pub fn residual_net(dim: usize, width: usize, depth: usize, rng: &mut Rng) -> Self {
        assert!(depth >= 1);
        let mut layers = Vec::with_capacity(depth);
        for k in 0..depth {
            let input = if k == 0 { dim } else { width };
            let last = k + 1 == depth;
            let output = if last { dim } else { width };
            let act = if last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Dense::init(input, output, act, rng));
        }
        Self {
            layers,
            scalar_head: None,
        }
    }

    /// `depth` ReLU layers of `width` units followed by a linear map to a scalar.
    pub fn scalar_net(dim: usize, width: usize, depth: usize, rng: &mut Rng) -> Self {
        assert!(depth >= 1);
        let layers = (0..depth)
            .map(|k| {
                let input = if k == 0 { dim } else { width };
                Dense::init(input, width, Activation::Relu, rng)
            })
            .collect();
        let head = Dense::init(width, 1, Activation::Identity, rng);
        Self {
            layers,
            scalar_head: Some(head),
        }
    }

    /// All layers in evaluation order, the scalar head last.
    pub fn chain(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().chain(self.scalar_head.iter())
    }

    pub fn chain_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.layers.iter_mut().chain(self.scalar_head.iter_mut())
    }

    fn chain_len(&self) -> usize {
        self.layers.len() + usize::from(self.scalar_head.is_some())
    }

    fn layer(&self, k: usize) -> &Dense {
        if k < self.layers.len() {
            &self.layers[k]
        } else {
            self.scalar_head.as_ref().expect("index within chain")
        }
    }

    fn layer_mut(&mut self, k: usize) -> &mut Dense {
        if k < self.layers.len() {
            &mut self.layers[k]
        } else {
            self.scalar_head.as_mut().expect("index within chain")
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.chain().last().unwrap().output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            scalar_head: self.scalar_head.as_ref().map(Dense::zeros_like),
        }
    }

    pub fn num_params(&self) -> usize {
        self.chain().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every parameter as a flat vector (weights then bias, layer by layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.chain() {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`MlpParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for l in self.chain_mut() {
            l.weight.iter_mut().for_each(|w| *w = *it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = *it.next().unwrap());
        }
    }

    /// `self += alpha * other`, shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &MlpParams) {
        for (a, b) in self.chain_mut().zip(other.chain()) {
            a.weight.scaled_add(alpha, &b.weight);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }

    pub fn dot(&self, other: &MlpParams) -> f64 {
        self.chain()
            .zip(other.chain())
            .map(|(a, b)| {
                (&a.weight * &b.weight).sum() + a.bias.dot(&b.bias)
            })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.chain()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.chain_len() == other.chain_len()
            && self
                .chain()
                .zip(other.chain())
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.activation == b.activation)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let shapes: Vec<_> = self.chain().map(|l| l.weight.dim()).collect();
        if shapes != cache.shapes {
            return Err(MuseError::InvalidState(
                "forward cache was produced by a network of a different shape".into(),
            ));
        }
        Ok(())
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_dim() {
            return invalid(format!(
                "input dimension {} does not match network input {}",
                x.ncols(),
                self.input_dim()
            ));
        }
        let n = self.chain_len();
        let mut inputs = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        let mut h = x.to_owned();
        for layer in self.chain() {
            let mut a = h.dot(&layer.weight.t());
            a += &layer.bias;
            let mask = match layer.activation {
                Activation::Identity => None,
                Activation::Relu => {
                    // mask is 0 at exactly 0 (left derivative)
                    let m = a.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    a *= &m;
                    Some(m)
                }
            };
            inputs.push(h);
            masks.push(mask);
            h = a;
        }
        let cache = ForwardCache {
            inputs,
            masks,
            shapes: self.chain().map(|l| l.weight.dim()).collect(),
            batch: x.nrows(),
        };
        Ok((h, cache))
    }

    fn check_cotangent(&self, cache: &ForwardCache, v: &ArrayView2<f64>) -> Result<()> {
        self.check_cache(cache)?;
        if v.nrows() != cache.batch || v.ncols() != self.output_dim() {
            return Err(MuseError::InvalidState(format!(
                "cotangent of shape {:?} does not match cached batch {} x {}",
                v.dim(),
                cache.batch,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// `J^T v` for every row, without parameter gradients.
    pub fn vjp_input_batch(&self, cache: &ForwardCache, v: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_cotangent(cache, &v)?;
        let mut g = v.to_owned();
        for k in (0..self.chain_len()).rev() {
            if let Some(m) = &cache.masks[k] {
                g *= m;
            }
            g = g.dot(&self.layer(k).weight);
        }
        Ok(g)
    }

    /// `J^T v` and the parameter gradient of `sum_rows <forward(x), v>`.
    pub fn vjp_batch(
        &self,
        cache: &ForwardCache,
        v: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, MlpParams)> {
        self.check_cotangent(cache, &v)?;
        let mut grads = self.zeros_like();
        let mut g = v.to_owned();
        for k in (0..self.chain_len()).rev() {
            if let Some(m) = &cache.masks[k] {
                g *= m;
            }
            let gl = grads.layer_mut(k);
            gl.weight = g.t().dot(&cache.inputs[k]);
            gl.bias = g.sum_axis(Axis(0));
            g = g.dot(&self.layer(k).weight);
        }
        Ok((g, grads))
    }

    /// Reverse-mode derivative of `G(theta, v) = J(x)^T v` with masks frozen.
    ///
    /// Given the cotangent `gx_bar` of `G`, returns the cotangent of `v` and
    /// the parameter gradient of `sum_rows <G, gx_bar>`. Biases do not enter
    /// `G`, so their gradients are zero.
    pub fn vjp_adjoint_batch(
        &self,
        cache: &ForwardCache,
        v: ArrayView2<f64>,
        gx_bar: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, MlpParams)> {
        self.check_cotangent(cache, &v)?;
        if gx_bar.dim() != (cache.batch, self.input_dim()) {
            return Err(MuseError::InvalidState(format!(
                "input cotangent of shape {:?} does not match batch {} x {}",
                gx_bar.dim(),
                cache.batch,
                self.input_dim()
            )));
        }
        let n = self.chain_len();
        // Backward sweep, keeping the masked cotangent entering each layer.
        let mut masked = vec![Array2::zeros((0, 0)); n];
        let mut g = v.to_owned();
        for k in (0..n).rev() {
            if let Some(m) = &cache.masks[k] {
                g *= m;
            }
            let next = g.dot(&self.layer(k).weight);
            masked[k] = g;
            g = next;
        }
        // Reverse of the backward sweep runs input -> output.
        let mut grads = self.zeros_like();
        let mut bar = gx_bar.to_owned();
        for (k, input) in masked.iter().enumerate() {
            let layer = self.layer(k);
            grads.layer_mut(k).weight = input.t().dot(&bar);
            bar = bar.dot(&layer.weight.t());
            if let Some(m) = &cache.masks[k] {
                bar *= m;
            }
        }
        Ok((bar, grads))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &Signal) -> Result<(Signal, ForwardCache)> {
        let row = ArrayView2::from_shape((1, x.len()), x.as_slice())
            .map_err(|e| MuseError::InvalidArgument(e.to_string()))?;
        let (y, cache) = self.forward_batch(row)?;
        Ok((Signal::from_vec(y.into_raw_vec_and_offset().0)?, cache))
    }

    /// Single-sample vector-Jacobian product.
    pub fn vjp(&self, cache: &ForwardCache, v: &Signal) -> Result<(Signal, MlpParams)> {
        let row = ArrayView2::from_shape((1, v.len()), v.as_slice())
            .map_err(|e| MuseError::InvalidState(e.to_string()))?;
        let (g, grads) = self.vjp_batch(cache, row)?;
        Ok((Signal::from_vec(g.into_raw_vec_and_offset().0)?, grads))
    }

    /// Power-iteration spectral norm of every weight matrix, head included.
    pub fn layer_norms(&self, iters: usize, rng: &mut Rng) -> Vec<f64> {
        self.chain().map(|l| l.spectral_norm(iters, rng)).collect()
    }
}

/// Divide every weight matrix by its estimated top singular value.
/// All-zero matrices are left untouched.
pub fn spectral_normalize(params: &MlpParams, iters: usize, rng: &mut Rng) -> Result<MlpParams> {
    if iters == 0 {
        return invalid("spectral normalization needs at least one power iteration");
    }
    let mut out = params.clone();
    for layer in out.chain_mut() {
        let s = layer.spectral_norm(iters, rng);
        if s > 0.0 {
            layer.weight.mapv_inplace(|w| w / s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: MlpParams,
    second: MlpParams,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut MlpParams,
    grads: &MlpParams,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first) {
        return invalid("gradient shape does not match parameters");
    }
    if !grads.is_finite() {
        return Err(MuseError::TrainingDiverged {
            step: state.step as usize,
            reason: "non-finite gradient".into(),
        });
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    let layers = params
        .chain_mut()
        .zip(grads.chain())
        .zip(state.first.chain_mut().zip(state.second.chain_mut()));
    for ((p, g), (m, v)) in layers {
        ndarray::Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(weight: Array2<f64>, act: Activation) -> MlpParams {
        let n = weight.nrows();
        MlpParams::new(vec![Dense::new(weight, Array1::zeros(n), act).unwrap()], None).unwrap()
    }

    #[test]
    fn identity_network() {
        let net = single(Array2::eye(2), Activation::Identity);
        let (y, _) = net.forward(&Signal::from_vec(vec![1.0, -2.0]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn relu_network() {
        let net = single(Array2::eye(2), Activation::Relu);
        let (y, _) = net.forward(&Signal::from_vec(vec![1.0, -2.0]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = single(Array2::eye(2), Activation::Identity);
        let x = Signal::from_vec(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(net.forward(&x), Err(MuseError::InvalidArgument(_))));
    }

    #[test]
    fn chaining_is_validated() {
        let a = Dense::new(Array2::zeros((3, 2)), Array1::zeros(3), Activation::Relu).unwrap();
        let b = Dense::new(Array2::zeros((2, 4)), Array1::zeros(2), Activation::Identity).unwrap();
        assert!(MlpParams::new(vec![a.clone(), b], None).is_err());
        let head = Dense::new(Array2::zeros((2, 3)), Array1::zeros(2), Activation::Identity).unwrap();
        assert!(MlpParams::new(vec![a], Some(head)).is_err());
    }

    #[test]
    fn linear_jacobian_transpose() {
        let w1 = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let w2 = array![[1.0, -1.0, 2.0], [0.0, 4.0, 1.0]];
        let net = MlpParams::new(
            vec![
                Dense::new(w1.clone(), Array1::zeros(3), Activation::Identity).unwrap(),
                Dense::new(w2.clone(), Array1::zeros(2), Activation::Identity).unwrap(),
            ],
            None,
        )
        .unwrap();
        let (_, cache) = net.forward(&Signal::from_vec(vec![0.3, 0.7]).unwrap()).unwrap();
        let v = array![1.5, -0.5];
        let (gx, _) = net.vjp(&cache, &Signal::from_vec(v.to_vec()).unwrap()).unwrap();
        let expected = w1.t().dot(&w2.t().dot(&v));
        for (a, b) in gx.as_slice().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = Rng::new(4);
        let net = MlpParams::residual_net(3, 5, 3, &mut rng);
        let (_, cache) = net.forward(&Signal::from_vec(vec![0.1, 0.2, -0.3]).unwrap()).unwrap();
        let (gx, grads) = net.vjp(&cache, &Signal::from_vec(vec![0.0; 3]).unwrap()).unwrap();
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
        assert!(grads.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(4);
        let a = MlpParams::residual_net(2, 4, 2, &mut rng);
        let b = MlpParams::residual_net(2, 6, 2, &mut rng);
        let (_, cache) = a.forward(&Signal::from_vec(vec![1.0, 1.0]).unwrap()).unwrap();
        let v = Signal::from_vec(vec![1.0, 1.0]).unwrap();
        assert!(matches!(b.vjp(&cache, &v), Err(MuseError::InvalidState(_))));
        let wrong = Signal::from_vec(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(a.vjp(&cache, &wrong), Err(MuseError::InvalidState(_))));
    }

    #[test]
    fn spectral_normalize_diagonal() {
        let net = single(array![[2.0, 0.0], [0.0, 1.0]], Activation::Identity);
        let out = spectral_normalize(&net, 50, &mut Rng::new(0)).unwrap();
        let w = &out.layers[0].weight;
        assert!((w[[0, 0]] - 1.0).abs() < 1e-6);
        assert!((w[[1, 1]] - 0.5).abs() < 1e-6);
        assert_eq!(w[[0, 1]], 0.0);
    }

    #[test]
    fn spectral_normalize_leaves_zero_matrix() {
        let net = single(Array2::zeros((2, 2)), Activation::Identity);
        let out = spectral_normalize(&net, 10, &mut Rng::new(0)).unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn spectral_normalize_is_idempotent() {
        let mut rng = Rng::new(12);
        let net = MlpParams::residual_net(4, 16, 3, &mut rng);
        let once = spectral_normalize(&net, 200, &mut rng).unwrap();
        let twice = spectral_normalize(&once, 200, &mut rng).unwrap();
        let mut diff = twice.clone();
        diff.axpy(-1.0, &once);
        assert!(diff.dot(&diff).sqrt() < 1e-6);
    }

    fn scalar_param() -> MlpParams {
        single(array![[0.0]], Activation::Identity)
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut p = scalar_param();
        let mut g = p.zeros_like();
        g.layers[0].weight[[0, 0]] = 1.0;
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut state = OptimizerState::new(&p, config);
        optimizer_step(&mut state, &mut p, &g).unwrap();
        assert!((p.layers[0].weight[[0, 0]] + 0.1).abs() < 1e-6);
        assert_eq!(p.layers[0].bias[0], 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = Rng::new(1);
        let mut p = MlpParams::residual_net(2, 3, 2, &mut rng);
        let before = p.clone();
        let mut state = OptimizerState::new(&p, AdamConfig::default());
        let g = p.zeros_like();
        optimizer_step(&mut state, &mut p, &g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_rejects_nan() {
        let mut p = scalar_param();
        let mut g = p.zeros_like();
        g.layers[0].weight[[0, 0]] = f64::NAN;
        let mut state = OptimizerState::new(&p, AdamConfig::default());
        assert!(matches!(
            optimizer_step(&mut state, &mut p, &g),
            Err(MuseError::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = Rng::new(9);
        let p = MlpParams::scalar_net(3, 4, 2, &mut rng);
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
    }
}
