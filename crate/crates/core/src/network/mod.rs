//! Fully connected networks with per-neuron activations.
//!
//! Layer `l` maps `z_{l-1}` to `z_l = σ_l(W_l z_{l-1} + b_l)`. Layers with spline
//! activations carry no bias: the knots absorb input shifts and `b2` supplies the
//! output offset. Layers made only of fixed activations always carry one.

mod activation;
mod matrix;
mod model_file;
mod objective;
mod sparsify;

pub use activation::{Activation, ActivationGrad, DEFAULT_LEAKY_SLOPE, DEFAULT_PRELU_SLOPE};
pub use matrix::Matrix;
pub use model_file::MODEL_VERSION;
pub use objective::{
    bce_grad, bce_loss, data_loss, regularized_cost, regularizer_value, DataTerm, OuterNorm,
    Regularization, BCE_EPS,
};
pub use sparsify::{sparsify, SparsifyOutcome};

pub(crate) use objective::{add_regularizer_gradient, data_loss_and_grad, power_norm};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::DeepSpline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseLayer {
    #[serde(rename = "W")]
    weights: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    activations: Vec<Activation>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Option<Vec<f64>>, activations: Vec<Activation>) -> Result<Self> {
        let layer = Self {
            weights,
            bias,
            activations,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Layer whose neurons all share copies of one activation. The parameters
    /// are still stored (and trained) per neuron.
    pub fn with_shared(weights: Matrix, bias: Option<Vec<f64>>, activation: Activation) -> Result<Self> {
        let n = weights.rows();
        Self::new(weights, bias, vec![activation; n])
    }

    fn validate(&self) -> Result<()> {
        let n = self.weights.rows();
        if n == 0 || self.weights.cols() == 0 {
            return Err(Error::InvalidNetwork("empty weight matrix".into()));
        }
        if !self.weights.is_finite() {
            return Err(Error::InvalidNetwork("weights must be finite".into()));
        }
        if self.activations.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "{} activations for {} neurons",
                self.activations.len(),
                n
            )));
        }
        for a in &self.activations {
            a.validate()?;
        }
        let has_spline = self.activations.iter().any(Activation::is_spline);
        match (&self.bias, has_spline) {
            (Some(_), true) => {
                return Err(Error::InvalidNetwork(
                    "layers with spline activations take no bias".into(),
                ))
            }
            (None, false) => {
                return Err(Error::InvalidNetwork(
                    "layers with fixed activations need a bias".into(),
                ))
            }
            (Some(b), false) => {
                if b.len() != n {
                    return Err(Error::InvalidNetwork(format!(
                        "bias of length {} for {} neurons",
                        b.len(),
                        n
                    )));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidNetwork("bias must be finite".into()));
                }
            }
            (None, true) => {}
        }
        Ok(())
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub(crate) fn activations_mut(&mut self) -> &mut [Activation] {
        &mut self.activations
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn pre_activation(&self, z: &[f64]) -> Vec<f64> {
        let mut s = self.weights.matvec(z);
        if let Some(b) = &self.bias {
            for (si, bi) in s.iter_mut().zip(b) {
                *si += bi;
            }
        }
        s
    }

    fn num_trainable(&self) -> usize {
        self.weights.len()
            + self.bias.as_ref().map_or(0, Vec::len)
            + self.activations.iter().map(Activation::num_trainable).sum::<usize>()
    }
}

/// Pre-activations `s_l` and post-activations `z_l` of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub activations: Vec<ActivationGrad>,
}

/// Gradients laid out like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                    activations: l.activations.iter().map(Activation::zero_grad).collect(),
                })
                .collect(),
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            if let (Some(x), Some(y)) = (a.bias.as_mut(), b.bias.as_ref()) {
                for (xi, yi) in x.iter_mut().zip(y) {
                    *xi += scale * yi;
                }
            }
            for (x, y) in a.activations.iter_mut().zip(&b.activations) {
                x.add_scaled(y, scale);
            }
        }
    }

    /// Flat vector in the same order as [`Network::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
            for a in &l.activations {
                a.write(&mut out);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("a network needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} has {} outputs but layer {} expects {} inputs",
                    i,
                    w[0].outputs(),
                    i + 1,
                    w[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Layer widths `(N₀, …, N_L)`.
    pub fn descriptor(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(DenseLayer::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z_prev = post.last().map_or(x, |v| v.as_slice());
            let s = layer.pre_activation(z_prev);
            let z: Vec<f64> = s
                .iter()
                .zip(&layer.activations)
                .map(|(&si, a)| a.eval(si))
                .collect();
            pre.push(s);
            post.push(z);
        }
        let y = post.last().cloned().unwrap_or_default();
        Ok((
            y,
            ForwardCache {
                input: x.to_vec(),
                pre,
                post,
            },
        ))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut z = x.to_vec();
        for layer in &self.layers {
            let s = layer.pre_activation(&z);
            z = s
                .iter()
                .zip(&layer.activations)
                .map(|(&si, a)| a.eval(si))
                .collect();
        }
        Ok(z)
    }

    /// Reverse-mode gradients of a scalar loss given `dL/dy` at the output.
    pub fn backward(&self, cache: &ForwardCache, dl_dy: &[f64]) -> Result<Gradients> {
        self.check_cache(cache)?;
        if dl_dy.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: dl_dy.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dz = dl_dy.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let s = &cache.pre[l];
            let z_prev: &[f64] = if l == 0 { &cache.input } else { &cache.post[l - 1] };

            let mut activations = Vec::with_capacity(layer.outputs());
            let mut ds = vec![0.0; layer.outputs()];
            for (n, act) in layer.activations.iter().enumerate() {
                ds[n] = dz[n] * act.derivative(s[n]);
                activations.push(act.param_gradient(s[n]).scaled(dz[n]));
            }

            let cols = layer.inputs();
            let mut dw = vec![0.0; layer.weights.len()];
            for (n, &dsn) in ds.iter().enumerate() {
                for (j, &zj) in z_prev.iter().enumerate() {
                    dw[n * cols + j] = dsn * zj;
                }
            }
            let bias = layer.bias.as_ref().map(|_| ds.clone());
            dz = layer.weights.transpose_matvec(&ds);
            grads.push(LayerGrad {
                weights: dw,
                bias,
                activations,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let stale = || Error::ShapeMismatch("forward cache does not match this network".into());
        if cache.input.len() != self.input_dim()
            || cache.pre.len() != self.layers.len()
            || cache.post.len() != self.layers.len()
        {
            return Err(stale());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if cache.pre[l].len() != layer.outputs() || cache.post[l].len() != layer.outputs() {
                return Err(stale());
            }
        }
        Ok(())
    }

    /// All trainable parameters, flattened layer by layer: weights (row-major),
    /// bias, then each neuron's activation parameters. Knots are not included.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_trainable());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
            for a in &l.activations {
                a.write_params(&mut out);
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_trainable() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.num_trainable()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&params[off..off + nw]);
            off += nw;
            if let Some(b) = &mut l.bias {
                let nb = b.len();
                b.copy_from_slice(&params[off..off + nb]);
                off += nb;
            }
            for a in &mut l.activations {
                let na = a.num_trainable();
                a.read_params(&params[off..off + na]);
                off += na;
            }
        }
        Ok(())
    }

    pub fn num_trainable(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_trainable).sum()
    }

    /// Parameter count used to compare architectures: every linear weight and
    /// bias, one slope per PReLU, and the nonzero ReLU weights plus the two
    /// affine coefficients of each spline.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights.len()
                    + l.bias.as_ref().map_or(0, Vec::len)
                    + l.activations.iter().map(Activation::own_param_count).sum::<usize>()
            })
            .sum()
    }

    /// Total nonzero ReLU weights across all spline activations.
    pub fn nonzero_coeffs(&self) -> usize {
        self.splines().map(DeepSpline::nonzero_coeffs).sum()
    }

    pub fn splines(&self) -> impl Iterator<Item = &DeepSpline> {
        self.layers
            .iter()
            .flat_map(|l| l.activations.iter().filter_map(Activation::as_spline))
    }

    /// The same network with each output sigmoid replaced by the identity, so the
    /// output is the logit. The bias moves into the spline offset.
    pub fn without_output_sigmoid(&self) -> Result<Network> {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("non-empty");
        if !last.activations.iter().any(|a| matches!(a, Activation::Sigmoid)) {
            return Ok(self.clone());
        }
        if last.activations.iter().any(|a| !matches!(a, Activation::Sigmoid)) {
            return Err(Error::InvalidNetwork(
                "output layer mixes sigmoid with other activations".into(),
            ));
        }
        let bias = last.bias.take().unwrap_or_else(|| vec![0.0; last.outputs()]);
        last.activations = bias
            .iter()
            .map(|&b| {
                let mut id = DeepSpline::identity();
                id.set_affine(1.0, b);
                Activation::Spline(id)
            })
            .collect();
        Network::new(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(w: f64) -> DenseLayer {
        DenseLayer::new(
            Matrix::from_rows(&[vec![w]]).unwrap(),
            None,
            vec![Activation::Spline(DeepSpline::identity())],
        )
        .unwrap()
    }

    fn f_abs() -> Activation {
        Activation::Spline(DeepSpline::new(vec![0.0], vec![2.0], -1.0, 0.0).unwrap())
    }

    #[test]
    fn forward_identity() {
        let net = Network::new(vec![identity_layer(1.0)]).unwrap();
        let (y, cache) = net.forward(&[3.0]).unwrap();
        assert_eq!(y, vec![3.0]);
        assert_eq!(cache.pre, vec![vec![3.0]]);
    }

    #[test]
    fn forward_abs_pair() {
        let layer = DenseLayer::new(
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(),
            None,
            vec![f_abs(), f_abs()],
        )
        .unwrap();
        let net = Network::new(vec![layer]).unwrap();
        assert_eq!(net.predict(&[2.0]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let net = Network::new(vec![identity_layer(1.0)]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn backward_linear_chain_is_regression_gradient() {
        // y = w2 · w1 · x; for squared error the weight gradients are classical.
        let net = Network::new(vec![identity_layer(0.5), identity_layer(3.0)]).unwrap();
        let x = 2.0;
        let target = 1.0;
        let (y, cache) = net.forward(&[x]).unwrap();
        let r = y[0] - target;
        let g = net.backward(&cache, &[r]).unwrap();
        assert_eq!(g.layers[1].weights, vec![r * 0.5 * x]);
        assert_eq!(g.layers[0].weights, vec![r * 3.0 * x]);
    }

    #[test]
    fn backward_zero_upstream() {
        let net = Network::new(vec![identity_layer(0.5), identity_layer(3.0)]).unwrap();
        let (_, cache) = net.forward(&[1.3]).unwrap();
        let g = net.backward(&cache, &[0.0]).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let a = Network::new(vec![identity_layer(1.0)]).unwrap();
        let b = Network::new(vec![identity_layer(1.0), identity_layer(1.0)]).unwrap();
        let (_, cache) = a.forward(&[1.0]).unwrap();
        assert!(matches!(b.backward(&cache, &[1.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn bias_rule_enforced() {
        let w = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(DenseLayer::new(w.clone(), Some(vec![0.0]), vec![f_abs()]).is_err());
        assert!(DenseLayer::new(w.clone(), None, vec![Activation::Relu]).is_err());
        assert!(DenseLayer::new(w, Some(vec![0.0]), vec![Activation::Relu]).is_ok());
    }

    #[test]
    fn dims_must_chain() {
        let l1 = identity_layer(1.0);
        let l2 = DenseLayer::new(
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            None,
            vec![Activation::Spline(DeepSpline::identity())],
        )
        .unwrap();
        assert!(Network::new(vec![l1, l2]).is_err());
    }

    #[test]
    fn params_roundtrip() {
        let l1 = DenseLayer::new(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
            Some(vec![0.1, 0.2]),
            vec![Activation::prelu(), Activation::Relu],
        )
        .unwrap();
        let l2 = DenseLayer::new(Matrix::from_rows(&[vec![5.0, 6.0]]).unwrap(), None, vec![f_abs()]).unwrap();
        let mut net = Network::new(vec![l1, l2]).unwrap();
        let p = net.params();
        assert_eq!(p.len(), net.num_trainable());
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 0.1, 0.2, 0.25, 5.0, 6.0, 2.0, -1.0, 0.0]);
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        net.set_params(&shifted).unwrap();
        assert_eq!(net.params(), shifted);
        assert!(net.set_params(&p[1..]).is_err());
        assert_eq!(Gradients::zeros_like(&net).flatten().len(), p.len());
    }

    #[test]
    fn logit_network_matches_pre_sigmoid() {
        let l = DenseLayer::new(
            Matrix::from_rows(&[vec![2.0, -1.0]]).unwrap(),
            Some(vec![0.3]),
            vec![Activation::Sigmoid],
        )
        .unwrap();
        let net = Network::new(vec![l]).unwrap();
        let logit = net.without_output_sigmoid().unwrap();
        let x = [0.4, 0.1];
        let z = logit.predict(&x).unwrap()[0];
        assert!((z - (0.8 - 0.1 + 0.3)).abs() < 1e-15);
        assert!((net.predict(&x).unwrap()[0] - activation::sigmoid(z)).abs() < 1e-15);
    }
}
