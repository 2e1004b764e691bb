//! Initialization and first-order training of the regularized objective.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{error_rate_by, Dataset};
use crate::error::{Error, Result};
use crate::lipschitz::bound_euclidean;
use crate::network::{
    add_regularizer_gradient, bce_loss, data_loss_and_grad, regularizer_value, sparsify,
    Activation, DataTerm, DenseLayer, Matrix, Network, OuterNorm, Regularization,
};
use crate::rng::{stream, STREAM_SHUFFLE};
use crate::spline::{uniform_grid, DeepSpline};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// BV² strength: a fixed value, or chosen so the layer balance holds at
/// initialization. Serialized as a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Lambda {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Auto => s.serialize_str("auto"),
            Lambda::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Lambda::Fixed(v)),
            Raw::Text(t) if t == "auto" => Ok(Lambda::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "lambda must be a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mu: f64,
    pub lambda: Lambda,
    /// Knots per spline activation.
    pub knots: usize,
    /// Interval covered by the uniform knot grid.
    pub knot_span: (f64, f64),
    pub outer_norm: OuterNorm,
    pub seed: u64,
    pub sparsify_budget: f64,
    pub data_term: DataTerm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            epochs: 1000,
            batch_size: 32,
            mu: 1e-4,
            lambda: Lambda::Auto,
            knots: 21,
            knot_span: (-1.0, 1.0),
            outer_norm: OuterNorm::L1,
            seed: 0,
            sparsify_budget: 0.01,
            data_term: DataTerm::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be nonnegative, got {}", self.mu));
        }
        if let Lambda::Fixed(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be nonnegative, got {l}"));
            }
        }
        if self.knots == 0 {
            return bad("knots must be at least 1".into());
        }
        if !(self.sparsify_budget >= 0.0) {
            return bad(format!("sparsify_budget must be nonnegative, got {}", self.sparsify_budget));
        }
        uniform_grid(self.knots, self.knot_span.0, self.knot_span.1)?;
        Ok(())
    }

    pub fn knot_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(self.knots, self.knot_span.0, self.knot_span.1)
    }
}

/// `fan_out × fan_in` matrix of i.i.d. `N(0, 2/(fan_in + fan_out))` entries.
pub fn xavier_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidConfig("fan_in and fan_out must be at least 1".into()));
    }
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let data = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(fan_out, fan_in, data)
}

/// `λ = 16 μ / (11 (2W + 1))` for a `(2, 2W, 1)` network with abs/soft initial
/// activations: the value that balances the hidden BV² penalty against the
/// expected output weight decay under Xavier initialization.
pub fn auto_lambda(mu: f64, width: usize) -> f64 {
    16.0 * mu / (11.0 * (2 * width + 1) as f64)
}

/// General form of [`auto_lambda`]: `2 μ E‖W₂‖_F² / ‖σ₁‖_{BV²,1}`, using the
/// first hidden layer's current activations and Xavier's second-layer variance.
pub fn auto_lambda_for(net: &Network, mu: f64) -> Result<f64> {
    let layers = net.layers();
    if layers.len() < 2 {
        return Err(Error::InvalidConfig(
            "automatic lambda needs at least two layers".into(),
        ));
    }
    let n1 = layers[1].inputs() as f64;
    let n2 = layers[1].outputs() as f64;
    let expected_w2 = n1 * n2 * 2.0 / (n1 + n2);
    let sigma = layers[0].activation_norm(1.0);
    if sigma == 0.0 {
        return Err(Error::InvalidConfig(
            "automatic lambda needs nonzero first-layer activations".into(),
        ));
    }
    Ok(2.0 * mu * expected_w2 / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HiddenKind {
    #[default]
    Spline,
    Relu,
    LeakyRelu,
    Prelu,
}

/// Xavier-initialized network with the given hidden activation and a sigmoid
/// output. Spline layers start with `|x|` on the first half of the neurons (the
/// extra one when odd) and soft-thresholding on the rest.
pub fn build_network<R: Rng + ?Sized>(
    descriptor: &[usize],
    hidden: HiddenKind,
    grid: &[f64],
    rng: &mut R,
) -> Result<Network> {
    if descriptor.len() < 2 || descriptor.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "descriptor {descriptor:?} needs at least two nonzero widths"
        )));
    }
    let abs = DeepSpline::init_abs(grid)?;
    let soft = DeepSpline::init_soft(grid)?;
    let last = descriptor.len() - 2;
    let mut layers = Vec::with_capacity(descriptor.len() - 1);
    for (l, w) in descriptor.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = xavier_init(fan_in, fan_out, rng)?;
        let layer = if l == last {
            DenseLayer::with_shared(weights, Some(vec![0.0; fan_out]), Activation::Sigmoid)?
        } else {
            match hidden {
                HiddenKind::Spline => {
                    let n_abs = fan_out.div_ceil(2);
                    let acts = (0..fan_out)
                        .map(|n| {
                            Activation::Spline(if n < n_abs { abs.clone() } else { soft.clone() })
                        })
                        .collect();
                    DenseLayer::new(weights, None, acts)?
                }
                HiddenKind::Relu => {
                    DenseLayer::with_shared(weights, Some(vec![0.0; fan_out]), Activation::Relu)?
                }
                HiddenKind::LeakyRelu => DenseLayer::with_shared(
                    weights,
                    Some(vec![0.0; fan_out]),
                    Activation::leaky_relu(),
                )?,
                HiddenKind::Prelu => {
                    DenseLayer::with_shared(weights, Some(vec![0.0; fan_out]), Activation::prelu())?
                }
            }
        };
        layers.push(layer);
    }
    Network::new(layers)
}

/// Plain gradient step `p ← p − lr·g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    /// Mean binary cross-entropy on the training set.
    pub loss: f64,
    pub error_rate: f64,
    pub lipschitz_bound: f64,
    pub nnz_coeffs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.objective).collect()
    }

    /// `epoch,objective,loss,error_rate,lipschitz_bound,nnz_coeffs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,objective,loss,error_rate,lipschitz_bound,nnz_coeffs\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{}",
                r.epoch, r.objective, r.loss, r.error_rate, r.lipschitz_bound, r.nnz_coeffs
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final network, after sparsification.
    pub network: Network,
    /// Network at the end of the last epoch, before sparsification.
    pub pre_sparsify: Network,
    pub history: TrainHistory,
    pub lambda: f64,
    pub sparsify_removed: usize,
    pub loss_before_sparsify: f64,
    pub loss_after_sparsify: f64,
}

/// Resolved per-layer regularization for `net` under `cfg`.
pub fn regularization_for(net: &Network, cfg: &TrainConfig) -> Result<Regularization> {
    let lambda = match cfg.lambda {
        Lambda::Fixed(l) => l,
        Lambda::Auto => auto_lambda_for(net, cfg.mu)?,
    };
    Ok(Regularization::uniform(net.layers().len(), cfg.mu, lambda, cfg.outer_norm))
}

fn epoch_metrics(
    net: &Network,
    ds: &Dataset,
    reg: &Regularization,
    term: DataTerm,
    epoch: usize,
) -> Result<EpochRecord> {
    let mut total = 0.0;
    for (x, &y) in ds.inputs().iter().zip(ds.labels()) {
        total += bce_loss(f64::from(y), net.predict(x)?[0]);
    }
    let mean = total / ds.len() as f64;
    let data = match term {
        DataTerm::Sum => total,
        DataTerm::Mean => mean,
    };
    let objective = data + regularizer_value(net, reg)?;
    let error_rate = error_rate_by(ds, |x| Ok(net.predict(x)?[0]))?;
    Ok(EpochRecord {
        epoch,
        objective,
        loss: mean,
        error_rate,
        lipschitz_bound: bound_euclidean(net, reg.outer).bound,
        nnz_coeffs: net.nonzero_coeffs(),
    })
}

/// Mini-batch training of data loss + weight decay + BV² penalty, followed by a
/// sparsification pass. Batches are drawn from the seed's shuffle stream, so the
/// result depends only on the initial network, the data and `cfg`.
pub fn train(net: &Network, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: ds.dim(),
        });
    }
    let reg = regularization_for(net, cfg)?;
    let mut rng = stream(cfg.seed, STREAM_SHUFFLE);
    let mut net = net.clone();
    let mut params = net.params();
    let mut adam = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = match cfg.data_term {
                DataTerm::Mean => 1.0 / batch.len() as f64,
                DataTerm::Sum => ds.len() as f64 / batch.len() as f64,
            };
            let (_, mut grads) = data_loss_and_grad(&net, ds, batch, scale)?;
            add_regularizer_gradient(&net, &reg, &mut grads)?;
            let flat = grads.flatten();
            if flat.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    detail: "gradient".into(),
                });
            }
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(&mut params, &flat, &mut adam, cfg.learning_rate)?,
                OptimizerKind::Sgd => sgd_step(&mut params, &flat, cfg.learning_rate)?,
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    detail: "parameters".into(),
                });
            }
            net.set_params(&params)?;
        }
        let record = epoch_metrics(&net, ds, &reg, cfg.data_term, epoch)?;
        if !record.objective.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("objective = {}", record.objective),
            });
        }
        history.epochs.push(record);
    }

    let sparse = sparsify(&net, ds, cfg.sparsify_budget)?;
    Ok(TrainOutcome {
        network: sparse.network,
        pre_sparsify: net,
        history,
        lambda: reg.lambda[0],
        sparsify_removed: sparse.removed,
        loss_before_sparsify: sparse.loss_before,
        loss_after_sparsify: sparse.loss_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_circle;
    use crate::rng::{stream, STREAM_INIT};

    #[test]
    fn xavier_variance_and_determinism() {
        let m = xavier_init(2, 1, &mut stream(5, 0)).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m, xavier_init(2, 1, &mut stream(5, 0)).unwrap());

        let big = xavier_init(2, 50_000, &mut stream(9, 0)).unwrap();
        let n = big.len() as f64;
        let mean = big.as_slice().iter().sum::<f64>() / n;
        let var = big.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 2.0 / 50_002.0;
        assert!((var / target - 1.0).abs() < 0.02, "variance ratio {}", var / target);

        assert!(xavier_init(0, 1, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn xavier_second_layer_variance() {
        // fan_in = 2W = 2, fan_out = 1: 10⁵ draws, target variance 2/3.
        let mut rng = stream(21, 0);
        let mut sq = 0.0;
        let mut count = 0.0;
        for _ in 0..50_000 {
            for v in xavier_init(2, 1, &mut rng).unwrap().as_slice() {
                sq += v * v;
                count += 1.0;
            }
        }
        assert!((sq / count / (2.0 / 3.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn auto_lambda_values() {
        assert!((auto_lambda(1e-4, 1) - 16.0 / 33.0 * 1e-4).abs() < 1e-20);
        assert!((auto_lambda(1e-4, 1) - 4.8485e-5).abs() < 1e-9);
        assert_eq!(auto_lambda(0.0, 3), 0.0);
        let mut prev = f64::INFINITY;
        for w in 1..50 {
            let l = auto_lambda(1e-3, w);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn general_auto_lambda_matches_closed_form() {
        let grid = uniform_grid(21, -1.0, 1.0).unwrap();
        for w in [1usize, 2, 5] {
            let net = build_network(&[2, 2 * w, 1], HiddenKind::Spline, &grid, &mut stream(0, STREAM_INIT)).unwrap();
            let l = auto_lambda_for(&net, 1e-4).unwrap();
            assert!((l - auto_lambda(1e-4, w)).abs() < 1e-18, "W={w}");
        }
    }

    #[test]
    fn builder_counts() {
        let grid = uniform_grid(21, -1.0, 1.0).unwrap();
        let mut rng = stream(0, STREAM_INIT);
        let relu = build_network(&[2, 10, 1], HiddenKind::Relu, &grid, &mut rng).unwrap();
        assert_eq!(relu.param_count(), 41);
        let prelu = build_network(&[2, 10, 1], HiddenKind::Prelu, &grid, &mut rng).unwrap();
        assert_eq!(prelu.param_count(), 51);
        let leaky = build_network(&[2, 10, 1], HiddenKind::LeakyRelu, &grid, &mut rng).unwrap();
        assert_eq!(leaky.param_count(), 41);
        let odd = build_network(&[2, 3, 1], HiddenKind::Spline, &grid, &mut rng).unwrap();
        let norms: Vec<f64> = odd.layers()[0].activations().iter().map(Activation::bv2_norm).collect();
        assert_eq!(norms, vec![3.0, 3.0, 2.5]);
    }

    #[test]
    fn sgd_and_adam_steps() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[2.0], 0.1).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert!(sgd_step(&mut p, &[1.0, 2.0], 0.1).is_err());

        let mut p = vec![0.5, -0.3];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1).unwrap();
        assert_eq!(p, vec![0.5, -0.3]);

        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[3.0, -0.02], &mut st, 0.01).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
        assert!((p[1] - 0.01).abs() < 1e-6);
        assert!(adam_step(&mut p, &[1.0], &mut st, 0.01).is_err());
    }

    #[test]
    fn zero_epochs_only_sparsifies() {
        let grid = uniform_grid(21, -1.0, 1.0).unwrap();
        let net = build_network(&[2, 2, 1], HiddenKind::Spline, &grid, &mut stream(1, STREAM_INIT)).unwrap();
        let ds = gen_circle(100, &mut stream(1, 1));
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&net, &ds, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.pre_sparsify, net);
        let expected = sparsify(&net, &ds, cfg.sparsify_budget).unwrap().network;
        assert_eq!(out.network, expected);
    }

    #[test]
    fn training_is_deterministic_and_nan_aborts() {
        let grid = uniform_grid(5, -1.0, 1.0).unwrap();
        let net = build_network(&[2, 2, 1], HiddenKind::Spline, &grid, &mut stream(2, STREAM_INIT)).unwrap();
        let ds = gen_circle(64, &mut stream(2, 1));
        let cfg = TrainConfig { epochs: 3, knots: 5, ..TrainConfig::default() };
        let a = train(&net, &ds, &cfg).unwrap();
        let b = train(&net, &ds, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
        assert_eq!(a.history.len(), 3);

        let wild = TrainConfig { learning_rate: 1e300, optimizer: OptimizerKind::Sgd, ..cfg };
        assert!(matches!(train(&net, &ds, &wild), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn config_validation_and_lambda_parsing() {
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { knots: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: Lambda::Fixed(-1.0), ..TrainConfig::default() }.validate().is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"lambda": "auto", "mu": 0.001}"#).unwrap();
        assert_eq!(cfg.lambda, Lambda::Auto);
        let cfg: TrainConfig = serde_json::from_str(r#"{"lambda": 0.01}"#).unwrap();
        assert_eq!(cfg.lambda, Lambda::Fixed(0.01));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lambda": "big"}"#).is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.1}"#).is_err());
    }
}
