use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{sign0, DeepSpline, Side, SplineGrad};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_PRELU_SLOPE: f64 = 0.25;

/// Per-neuron activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Spline(DeepSpline),
    Relu,
    LeakyRelu { slope: f64 },
    /// Leaky ReLU whose negative-side slope is trained.
    Prelu { slope: f64 },
    Sigmoid,
}

/// Gradient with respect to an activation's own trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationGrad {
    None,
    Spline(SplineGrad),
    Prelu(f64),
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn prelu() -> Self {
        Activation::Prelu {
            slope: DEFAULT_PRELU_SLOPE,
        }
    }

    pub fn is_spline(&self) -> bool {
        matches!(self, Activation::Spline(_))
    }

    pub fn as_spline(&self) -> Option<&DeepSpline> {
        match self {
            Activation::Spline(s) => Some(s),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Activation::Spline(s) => s.validate(),
            Activation::LeakyRelu { slope } if !(*slope > 0.0 && *slope < 1.0) => Err(
                Error::InvalidNetwork(format!("LeakyReLU slope {slope} outside (0, 1)")),
            ),
            Activation::Prelu { slope } if !slope.is_finite() => Err(Error::InvalidNetwork(
                "PReLU slope must be finite".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Activation::Spline(s) => s.eval(x),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => leaky(x, *slope),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Right derivative with respect to the input.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Spline(s) => s.one_sided_derivative(x, Side::Right),
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Derivative of the output with respect to the activation's own parameters.
    pub fn param_gradient(&self, x: f64) -> ActivationGrad {
        match self {
            Activation::Spline(s) => ActivationGrad::Spline(s.param_gradients(x)),
            Activation::Prelu { .. } => ActivationGrad::Prelu(x.min(0.0)),
            _ => ActivationGrad::None,
        }
    }

    pub fn zero_grad(&self) -> ActivationGrad {
        match self {
            Activation::Spline(s) => ActivationGrad::Spline(SplineGrad::zeros(s.num_knots())),
            Activation::Prelu { .. } => ActivationGrad::Prelu(0.0),
            _ => ActivationGrad::None,
        }
    }

    /// BV² norm `TV²(σ) + |σ(0)| + |σ(1)|`, in closed form for the fixed kinds.
    pub fn bv2_norm(&self) -> f64 {
        match self {
            Activation::Spline(s) => s.bv2_norm(),
            Activation::Relu => 2.0,
            Activation::LeakyRelu { slope } => (1.0 - slope).abs() + 1.0,
            Activation::Prelu { slope } => (1.0 - slope).abs() + 1.0,
            // TV² = 2·max σ' = 1/2, σ(0) = 1/2.
            Activation::Sigmoid => 1.0 + sigmoid(1.0),
        }
    }

    pub fn bv2_subgradient(&self) -> ActivationGrad {
        match self {
            Activation::Spline(s) => ActivationGrad::Spline(s.bv2_subgradient()),
            Activation::Prelu { slope } => ActivationGrad::Prelu(-sign0(1.0 - slope)),
            _ => ActivationGrad::None,
        }
    }

    /// Trainable or stored parameters owned by the activation, excluding the
    /// bias of the preceding linear map.
    pub fn own_param_count(&self) -> usize {
        match self {
            Activation::Spline(s) => s.nonzero_coeffs() + 2,
            Activation::Prelu { .. } => 1,
            _ => 0,
        }
    }

    pub(crate) fn num_trainable(&self) -> usize {
        match self {
            Activation::Spline(s) => s.num_knots() + 2,
            Activation::Prelu { .. } => 1,
            _ => 0,
        }
    }

    pub(crate) fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Activation::Spline(s) => {
                out.extend_from_slice(s.coeffs());
                out.push(s.b1());
                out.push(s.b2());
            }
            Activation::Prelu { slope } => out.push(*slope),
            _ => {}
        }
    }

    pub(crate) fn read_params(&mut self, src: &[f64]) {
        match self {
            Activation::Spline(s) => {
                let k = s.num_knots();
                s.coeffs_mut().copy_from_slice(&src[..k]);
                s.set_affine(src[k], src[k + 1]);
            }
            Activation::Prelu { slope } => *slope = src[0],
            _ => {}
        }
    }
}

impl ActivationGrad {
    pub(crate) fn write(&self, out: &mut Vec<f64>) {
        match self {
            ActivationGrad::None => {}
            ActivationGrad::Spline(g) => {
                out.extend_from_slice(&g.coeffs);
                out.push(g.b1);
                out.push(g.b2);
            }
            ActivationGrad::Prelu(g) => out.push(*g),
        }
    }

    pub(crate) fn scaled(self, factor: f64) -> Self {
        match self {
            ActivationGrad::None => ActivationGrad::None,
            ActivationGrad::Spline(mut g) => {
                g.coeffs.iter_mut().for_each(|c| *c *= factor);
                g.b1 *= factor;
                g.b2 *= factor;
                ActivationGrad::Spline(g)
            }
            ActivationGrad::Prelu(g) => ActivationGrad::Prelu(g * factor),
        }
    }

    /// `self += scale · other`; both must come from the same activation.
    pub(crate) fn add_scaled(&mut self, other: &ActivationGrad, scale: f64) {
        match (self, other) {
            (ActivationGrad::Spline(a), ActivationGrad::Spline(b)) => {
                for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
                    *x += scale * y;
                }
                a.b1 += scale * b.b1;
                a.b2 += scale * b.b2;
            }
            (ActivationGrad::Prelu(a), ActivationGrad::Prelu(b)) => *a += scale * b,
            _ => {}
        }
    }
}
