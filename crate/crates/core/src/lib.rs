//! Fully connected networks with learnable linear-spline activations.
//!
//! Each hidden neuron applies a continuous piecewise-linear activation
//! `σ(x) = Σ_k a_k ReLU(x − τ_k) + b1 x + b2` on a fixed knot grid. Training
//! minimizes a data loss plus weight decay on the linear layers plus the BV²
//! norm of every activation (`‖a‖₁ + |σ(0)| + |σ(1)|`), which drives most `a_k`
//! toward zero. The same norms give a certified upper bound on the network's
//! global Lipschitz constant.
//!
//! Modules:
//!
//! - [`spline`]: the activation itself, its norms and subgradients.
//! - [`network`]: dense layers, forward/backward passes, objective, model files.
//! - [`optim`]: Xavier initialization, SGD/Adam and the training loop.
//! - [`lipschitz`]: product bounds, sampled lower bounds, layer balance.
//! - [`data`]: the circle classification task and CSV I/O.
//! - [`rng`]: seeded ChaCha8 streams.

pub mod data;
pub mod error;
pub mod lipschitz;
pub mod network;
pub mod optim;
pub mod rng;
pub mod spline;

pub use data::{circle_label, error_rate, gen_circle, Dataset, Split};
pub use error::{Error, Result};
pub use lipschitz::{
    bound_euclidean, bound_general, empirical_lipschitz, empirical_lipschitz_p, mixed_norm,
    thm4_balance, BoundReport, Exponent,
};
pub use network::{Activation, DenseLayer, Matrix, Network, OuterNorm, Regularization};
pub use optim::{auto_lambda, build_network, train, HiddenKind, Lambda, TrainConfig, TrainHistory};
pub use spline::{DeepSpline, Side};
