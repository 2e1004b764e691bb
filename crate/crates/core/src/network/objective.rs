//! Loss, regularizers and the full training objective.

use serde::{Deserialize, Serialize};

use super::{Activation, Gradients, Network};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Predictions are clamped to `[BCE_EPS, 1 − BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

/// Binary cross-entropy `−y log ŷ − (1 − y) log(1 − ŷ)`.
pub fn bce_loss(y: f64, yhat: f64) -> f64 {
    let p = yhat.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -y * p.ln() - (1.0 - y) * (1.0 - p).ln();
    // A perfect prediction would otherwise report ~1e-12.
    if (y == 1.0 && yhat >= 1.0) || (y == 0.0 && yhat <= 0.0) {
        0.0
    } else {
        loss
    }
}

/// `∂E/∂ŷ` of [`bce_loss`], evaluated at the clamped prediction.
pub fn bce_grad(y: f64, yhat: f64) -> f64 {
    let p = yhat.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -y / p + (1.0 - y) / (1.0 - p)
}

/// Whether the data-fidelity term sums or averages the per-sample losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataTerm {
    Sum,
    #[default]
    Mean,
}

/// How per-neuron BV² norms are aggregated within a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OuterNorm {
    #[default]
    L1,
    L2,
}

impl OuterNorm {
    pub fn exponent(self) -> f64 {
        match self {
            OuterNorm::L1 => 1.0,
            OuterNorm::L2 => 2.0,
        }
    }
}

impl std::str::FromStr for OuterNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(OuterNorm::L1),
            "l2" | "L2" => Ok(OuterNorm::L2),
            other => Err(Error::InvalidConfig(format!("unknown outer norm {other:?}"))),
        }
    }
}

/// Per-layer weight-decay (`μ_l`) and BV² (`λ_l`) strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularization {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub outer: OuterNorm,
}

impl Regularization {
    /// The same `μ` and `λ` on every layer.
    pub fn uniform(num_layers: usize, mu: f64, lambda: f64, outer: OuterNorm) -> Self {
        Self {
            mu: vec![mu; num_layers],
            lambda: vec![lambda; num_layers],
            outer,
        }
    }

    fn check(&self, net: &Network) -> Result<()> {
        let l = net.layers().len();
        if self.mu.len() != l || self.lambda.len() != l {
            return Err(Error::ShapeMismatch(format!(
                "regularization given for {}/{} layers, network has {l}",
                self.mu.len(),
                self.lambda.len()
            )));
        }
        Ok(())
    }
}

/// `Σ_l μ_l ‖W_l‖_F² + Σ_l λ_l ‖σ_l‖_{BV²,outer}`.
pub fn regularizer_value(net: &Network, reg: &Regularization) -> Result<f64> {
    reg.check(net)?;
    let p = reg.outer.exponent();
    Ok(net
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            reg.mu[l] * layer.weights().frobenius_sq() + reg.lambda[l] * layer.activation_norm(p)
        })
        .sum())
}

/// Adds a (sub)gradient of [`regularizer_value`] to `grads`.
pub(crate) fn add_regularizer_gradient(
    net: &Network,
    reg: &Regularization,
    grads: &mut Gradients,
) -> Result<()> {
    reg.check(net)?;
    for (l, (layer, g)) in net.layers().iter().zip(&mut grads.layers).enumerate() {
        let two_mu = 2.0 * reg.mu[l];
        if two_mu != 0.0 {
            for (gw, w) in g.weights.iter_mut().zip(layer.weights().as_slice()) {
                *gw += two_mu * w;
            }
        }
        let lambda = reg.lambda[l];
        if lambda == 0.0 {
            continue;
        }
        let layer_norm = match reg.outer {
            OuterNorm::L1 => None,
            OuterNorm::L2 => Some(layer.activation_norm(2.0)),
        };
        for (act, ga) in layer.activations().iter().zip(&mut g.activations) {
            // d/dθ (Σ n_i²)^{1/2} = n_i / ‖n‖₂ · dn_i/dθ
            let weight = match layer_norm {
                None => lambda,
                Some(total) if total > 0.0 => lambda * act.bv2_norm() / total,
                Some(_) => 0.0,
            };
            if weight != 0.0 {
                ga.add_scaled(&act.bv2_subgradient(), weight);
            }
        }
    }
    Ok(())
}

fn check_scalar_output(net: &Network, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if net.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: net.output_dim(),
        });
    }
    Ok(())
}

/// Binary cross-entropy of the network on a dataset.
pub fn data_loss(net: &Network, ds: &Dataset, term: DataTerm) -> Result<f64> {
    check_scalar_output(net, ds)?;
    let mut total = 0.0;
    for (x, &y) in ds.inputs().iter().zip(ds.labels()) {
        let yhat = net.predict(x)?[0];
        total += bce_loss(f64::from(y), yhat);
    }
    Ok(match term {
        DataTerm::Sum => total,
        DataTerm::Mean => total / ds.len() as f64,
    })
}

/// Full regularized objective: data term plus weight decay plus BV² penalty.
/// An empty dataset contributes a zero data term.
pub fn regularized_cost(
    net: &Network,
    ds: &Dataset,
    reg: &Regularization,
    term: DataTerm,
) -> Result<f64> {
    let data = if ds.is_empty() {
        0.0
    } else {
        data_loss(net, ds, term)?
    };
    Ok(data + regularizer_value(net, reg)?)
}

/// Loss and gradient of the data term over `indices` of `ds`, scaled by `scale`.
pub(crate) fn data_loss_and_grad(
    net: &Network,
    ds: &Dataset,
    indices: &[usize],
    scale: f64,
) -> Result<(f64, Gradients)> {
    check_scalar_output(net, ds)?;
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for &i in indices {
        let y = f64::from(ds.labels()[i]);
        let (out, cache) = net.forward(&ds.inputs()[i])?;
        loss += bce_loss(y, out[0]);
        let g = net.backward(&cache, &[bce_grad(y, out[0])])?;
        grads.add_scaled(&g, scale);
    }
    Ok((loss * scale, grads))
}

impl super::DenseLayer {
    /// `(Σ_n ‖σ_n‖_{BV²}^p)^{1/p}`, or the max for `p = ∞`. The largest term is
    /// factored out before raising to `p`.
    pub fn activation_norm(&self, p: f64) -> f64 {
        power_norm(self.activations().iter().map(Activation::bv2_norm), p)
    }
}

pub(crate) fn power_norm(values: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    let max = values.clone().fold(0.0_f64, |m, v| m.max(v.abs()));
    if p.is_infinite() || max == 0.0 {
        return max;
    }
    if p == 1.0 {
        return values.map(f64::abs).sum();
    }
    let s: f64 = values.map(|v| (v.abs() / max).powf(p)).sum();
    max * s.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{DenseLayer, Matrix};
    use crate::spline::DeepSpline;

    fn abs_soft_layer() -> DenseLayer {
        DenseLayer::new(
            Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            None,
            vec![
                Activation::Spline(DeepSpline::new(vec![0.0], vec![2.0], -1.0, 0.0).unwrap()),
                Activation::Spline(
                    DeepSpline::new(vec![-0.5, 0.5], vec![-1.0, 1.0], 1.0, 0.5).unwrap(),
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(1.0, 0.5) - ln2).abs() < 1e-15);
        assert!((bce_loss(0.0, 0.5) - ln2).abs() < 1e-15);
        assert_eq!(bce_loss(1.0, 1.0), 0.0);
        assert_eq!(bce_loss(0.0, 0.0), 0.0);
        assert!(bce_loss(1.0, 0.0).is_finite());
    }

    #[test]
    fn bce_gradient_matches_difference() {
        for (y, p) in [(1.0, 0.3), (0.0, 0.7), (1.0, 0.9)] {
            let h = 1e-7;
            let fd = (bce_loss(y, p + h) - bce_loss(y, p - h)) / (2.0 * h);
            assert!((fd - bce_grad(y, p)).abs() < 1e-6);
        }
    }

    #[test]
    fn cost_of_single_abs_neuron() {
        let layer = DenseLayer::new(
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            None,
            vec![Activation::Spline(DeepSpline::new(vec![0.0], vec![2.0], -1.0, 0.0).unwrap())],
        )
        .unwrap();
        let net = Network::new(vec![layer]).unwrap();
        let reg = Regularization::uniform(1, 0.0, 1.0, OuterNorm::L1);
        let cost = regularized_cost(&net, &Dataset::empty(1), &reg, DataTerm::Sum).unwrap();
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn outer_norms() {
        let net = Network::new(vec![abs_soft_layer()]).unwrap();
        let l1 = regularizer_value(&net, &Regularization::uniform(1, 0.0, 1.0, OuterNorm::L1)).unwrap();
        let l2 = regularizer_value(&net, &Regularization::uniform(1, 0.0, 1.0, OuterNorm::L2)).unwrap();
        assert_eq!(l1, 5.5);
        assert!((l2 - 15.25_f64.sqrt()).abs() < 1e-15);
        assert!((l2 - 3.905).abs() < 5e-4);
    }

    #[test]
    fn weight_decay_term() {
        let layer = DenseLayer::new(
            Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap(),
            None,
            vec![Activation::Spline(DeepSpline::identity())],
        )
        .unwrap();
        let net = Network::new(vec![layer]).unwrap();
        let reg = Regularization::uniform(1, 1.0, 0.0, OuterNorm::L1);
        assert_eq!(regularizer_value(&net, &reg).unwrap(), 25.0);
    }

    #[test]
    fn regularization_shape_checked() {
        let net = Network::new(vec![abs_soft_layer()]).unwrap();
        let reg = Regularization::uniform(2, 0.0, 1.0, OuterNorm::L1);
        assert!(regularizer_value(&net, &reg).is_err());
    }

    #[test]
    fn power_norm_cases() {
        let v = [3.0, 2.5];
        assert_eq!(power_norm(v.iter().copied(), 1.0), 5.5);
        assert_eq!(power_norm(v.iter().copied(), f64::INFINITY), 3.0);
        assert!((power_norm(v.iter().copied(), 2.0) - 15.25_f64.sqrt()).abs() < 1e-15);
        assert!(power_norm([1e300, 1e300].iter().copied(), 2.0).is_finite());
    }

    #[test]
    fn regularizer_gradient_matches_differences() {
        let prelu = DenseLayer::new(
            Matrix::from_rows(&[vec![0.4, -1.1]]).unwrap(),
            Some(vec![0.2]),
            vec![Activation::Prelu { slope: 0.3 }],
        )
        .unwrap();
        let net = Network::new(vec![abs_soft_layer(), prelu]).unwrap();
        for outer in [OuterNorm::L1, OuterNorm::L2] {
            let reg = Regularization {
                mu: vec![0.3, 0.7],
                lambda: vec![0.9, 0.5],
                outer,
            };
            let mut g = Gradients::zeros_like(&net);
            add_regularizer_gradient(&net, &reg, &mut g).unwrap();
            let analytic = g.flatten();
            let params = net.params();
            let mut probe = net.clone();
            let h = 1e-7;
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += h;
                probe.set_params(&p).unwrap();
                let up = regularizer_value(&probe, &reg).unwrap();
                p[i] -= 2.0 * h;
                probe.set_params(&p).unwrap();
                let down = regularizer_value(&probe, &reg).unwrap();
                let fd = (up - down) / (2.0 * h);
                assert!((fd - analytic[i]).abs() < 1e-6, "{outer:?} param {i}: {fd} vs {}", analytic[i]);
            }
        }
    }
}
