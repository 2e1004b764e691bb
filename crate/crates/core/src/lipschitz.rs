//! Certified upper bounds on a network's global Lipschitz constant.
//!
//! Two product bounds are provided. The general one holds for the `ℓ_p` topology
//! on inputs and outputs:
//!
//! ```text
//! C = Π_l ‖W_l‖_{q,∞} · Π_l ‖σ_l‖_{BV²,p},    1/p + 1/q = 1
//! ```
//!
//! where `‖W‖_{q,∞}` is the largest `ℓ_q` norm of a row. The Euclidean one
//! replaces the mixed norm by the Frobenius norm and uses the `ℓ1` (or the
//! tighter `ℓ2`) aggregate of the per-neuron BV² norms. Biases shift inputs
//! and do not enter either bound.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::network::{DenseLayer, Matrix, Network, OuterNorm};

/// A norm exponent in `[1, ∞]`. Serialized as a number, or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p >= 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::InvalidConfig(format!("norm exponent must be in [1, inf], got {p}")))
        }
    }

    /// Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> Exponent {
        if self.0 == 1.0 {
            Exponent::INF
        } else if self.0.is_infinite() {
            Exponent::ONE
        } else {
            Exponent(self.0 / (self.0 - 1.0))
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "Inf" | "infinity" => Ok(Exponent::INF),
            _ => s
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad norm exponent {s:?}")))
                .and_then(Exponent::new),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::new(p).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `ℓ_p` norm of a vector, with the largest entry factored out.
pub fn lp_norm(v: &[f64], p: Exponent) -> f64 {
    crate::network::power_norm(v.iter().copied(), p.0)
}

/// `‖W‖_{q,∞}`: the largest `ℓ_q` norm over the rows of `W`.
pub fn mixed_norm(w: &Matrix, q: Exponent) -> f64 {
    w.row_iter().map(|row| lp_norm(row, q)).fold(0.0, f64::max)
}

/// `(Σ_n ‖σ_n‖_{BV²}^p)^{1/p}` over the neurons of a layer.
pub fn layer_activation_norm(layer: &DenseLayer, p: Exponent) -> f64 {
    layer.activation_norm(p.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Mixed-norm bound in the `ℓ_p` topology.
    General,
    /// Frobenius bound in the Euclidean topology.
    Euclidean,
}

/// Balance between a nonlinear layer and the next linear layer:
/// `λ_l ‖σ_l‖_{BV²,1} / (2 μ_{l+1} ‖W_{l+1}‖_F²)`. `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub layer: usize,
    pub ratio: Option<f64>,
}

impl Balance {
    pub fn value(&self) -> f64 {
        self.ratio.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Topology exponent: `p` for the general bound, 2 for the Euclidean one.
    pub p: Exponent,
    /// Exponent used to aggregate the activation norms within each layer.
    pub outer: Exponent,
    pub linear_norms: Vec<f64>,
    pub activation_norms: Vec<f64>,
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<Vec<Balance>>,
}

impl BoundReport {
    pub fn csv_header() -> &'static str {
        "kind,p,outer,bound,empirical_lower,linear_norms,activation_norms"
    }

    /// One CSV row; per-layer lists are `;`-separated.
    pub fn csv_row(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";");
        format!(
            "{},{},{},{:?},{},{},{}",
            match self.kind {
                BoundKind::General => "general",
                BoundKind::Euclidean => "euclidean",
            },
            self.p,
            self.outer,
            self.bound,
            self.empirical_lower.map_or(String::new(), |v| format!("{v:?}")),
            join(&self.linear_norms),
            join(&self.activation_norms),
        )
    }
}

/// General bound for the `ℓ_p` topology.
pub fn bound_general(net: &Network, p: Exponent) -> BoundReport {
    let q = p.conjugate();
    let linear_norms: Vec<f64> = net.layers().iter().map(|l| mixed_norm(l.weights(), q)).collect();
    let activation_norms: Vec<f64> = net
        .layers()
        .iter()
        .map(|l| layer_activation_norm(l, p))
        .collect();
    let bound = linear_norms.iter().product::<f64>() * activation_norms.iter().product::<f64>();
    BoundReport {
        kind: BoundKind::General,
        p,
        outer: p,
        linear_norms,
        activation_norms,
        bound,
        empirical_lower: None,
        balance: None,
    }
}

/// Euclidean bound with Frobenius norms and the chosen outer norm.
pub fn bound_euclidean(net: &Network, outer: OuterNorm) -> BoundReport {
    let outer = Exponent(outer.exponent());
    let linear_norms: Vec<f64> = net.layers().iter().map(|l| l.weights().frobenius()).collect();
    let activation_norms: Vec<f64> = net
        .layers()
        .iter()
        .map(|l| layer_activation_norm(l, outer))
        .collect();
    let bound = linear_norms.iter().product::<f64>() * activation_norms.iter().product::<f64>();
    BoundReport {
        kind: BoundKind::Euclidean,
        p: Exponent::TWO,
        outer,
        linear_norms,
        activation_norms,
        bound,
        empirical_lower: None,
        balance: None,
    }
}

/// Axis-aligned sampling box, one `(lo, hi)` interval per input.
pub type InputBox = Vec<(f64, f64)>;

pub fn unit_box(dim: usize) -> InputBox {
    vec![(-1.0, 1.0); dim]
}

/// Sampled lower bound on the Lipschitz constant in the Euclidean norm.
pub fn empirical_lipschitz<R: Rng + ?Sized>(
    net: &Network,
    n_pairs: usize,
    rng: &mut R,
    bbox: &[(f64, f64)],
) -> Result<f64> {
    empirical_lipschitz_p(net, n_pairs, rng, bbox, Exponent::TWO)
}

/// Largest `‖f(x₁) − f(x₂)‖_p / ‖x₁ − x₂‖_p` over `n_pairs` uniform pairs from
/// the box plus `n_pairs` close pairs `(x, x + δ)` with `‖δ‖_p = 1e-4`.
pub fn empirical_lipschitz_p<R: Rng + ?Sized>(
    net: &Network,
    n_pairs: usize,
    rng: &mut R,
    bbox: &[(f64, f64)],
    p: Exponent,
) -> Result<f64> {
    const CLOSE: f64 = 1e-4;
    if n_pairs == 0 {
        return Err(Error::InvalidConfig("need at least one sample pair".into()));
    }
    if bbox.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: bbox.len(),
        });
    }
    let sample = |rng: &mut R| -> Vec<f64> {
        bbox.iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    };
    let ratio = |a: &[f64], b: &[f64]| -> Result<Option<f64>> {
        let dx: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
        let den = lp_norm(&dx, p);
        if den == 0.0 {
            return Ok(None);
        }
        let fa = net.predict(a)?;
        let fb = net.predict(b)?;
        let dy: Vec<f64> = fa.iter().zip(&fb).map(|(u, v)| u - v).collect();
        Ok(Some(lp_norm(&dy, p) / den))
    };

    let mut best = 0.0_f64;
    for _ in 0..n_pairs {
        let x1 = sample(rng);
        let x2 = sample(rng);
        if let Some(r) = ratio(&x1, &x2)? {
            best = best.max(r);
        }

        let x = sample(rng);
        let dir: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let n = lp_norm(&dir, p);
        if n > 0.0 {
            let y: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + CLOSE * di / n).collect();
            if let Some(r) = ratio(&x, &y)? {
                best = best.max(r);
            }
        }
    }
    Ok(best)
}

/// Per-layer balance ratios for `l = 1..L−1` (zero-based `0..L−1`).
pub fn thm4_balance(net: &Network, mu: &[f64], lambda: &[f64]) -> Result<Vec<Balance>> {
    let layers = net.layers();
    if layers.len() < 2 {
        return Err(Error::InvalidNetwork(
            "balance ratios need at least two layers".into(),
        ));
    }
    if mu.len() != layers.len() || lambda.len() != layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} per-layer strengths",
            layers.len()
        )));
    }
    Ok((0..layers.len() - 1)
        .map(|l| {
            let num = lambda[l] * layers[l].activation_norm(1.0);
            let den = 2.0 * mu[l + 1] * layers[l + 1].weights().frobenius_sq();
            Balance {
                layer: l,
                ratio: (den != 0.0).then(|| num / den),
            }
        })
        .collect())
}
