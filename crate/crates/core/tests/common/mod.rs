#![allow(dead_code)]

use deepspline::network::{Activation, DenseLayer, Matrix, Network};
use deepspline::spline::{uniform_grid, DeepSpline};
use rand::Rng;
use rand_distr::StandardNormal;

/// Spline on a random uniform grid with dense Gaussian coefficients.
pub fn random_spline<R: Rng>(rng: &mut R) -> DeepSpline {
    let k = rng.random_range(1..=9);
    let lo = rng.random_range(-2.0..-0.5);
    let hi = rng.random_range(0.5..2.0);
    let knots = uniform_grid(k, lo, hi).unwrap();
    let coeffs = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    DeepSpline::new(knots, coeffs, rng.sample(StandardNormal), rng.sample(StandardNormal)).unwrap()
}

fn random_fixed<R: Rng>(rng: &mut R) -> Activation {
    match rng.random_range(0..4) {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu {
            slope: rng.random_range(0.01..0.5),
        },
        2 => Activation::Prelu {
            slope: rng.random_range(-0.5..0.8),
        },
        _ => Activation::Sigmoid,
    }
}

/// Network with the given widths. Each layer is, at random, all splines (no bias)
/// or all fixed activations (with bias).
pub fn random_network<R: Rng>(descriptor: &[usize], rng: &mut R) -> Network {
    let layers = descriptor
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let data = (0..fan_in * fan_out)
                .map(|_| rng.sample::<f64, _>(StandardNormal) / (fan_in as f64).sqrt())
                .collect();
            let weights = Matrix::from_vec(fan_out, fan_in, data).unwrap();
            if rng.random_bool(0.6) {
                let acts = (0..fan_out).map(|_| Activation::Spline(random_spline(rng))).collect();
                DenseLayer::new(weights, None, acts).unwrap()
            } else {
                let bias = (0..fan_out).map(|_| rng.random_range(-0.5..0.5)).collect();
                let acts = (0..fan_out).map(|_| random_fixed(rng)).collect();
                DenseLayer::new(weights, Some(bias), acts).unwrap()
            }
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Random descriptor `(N₀, …, N_L)` with `N₀ ≤ 3`, hidden widths `≤ 5`, one output.
pub fn random_descriptor<R: Rng>(rng: &mut R) -> Vec<usize> {
    let hidden = rng.random_range(0..=2);
    let mut d = vec![rng.random_range(1..=3)];
    for _ in 0..hidden {
        d.push(rng.random_range(1..=5));
    }
    d.push(1);
    d
}

/// Distance from `s` to the nearest kink of `act`.
pub fn kink_distance(act: &Activation, s: f64) -> f64 {
    match act {
        Activation::Spline(sp) => sp.knots().iter().map(|t| (s - t).abs()).fold(f64::INFINITY, f64::min),
        Activation::Relu | Activation::LeakyRelu { .. } | Activation::Prelu { .. } => s.abs(),
        Activation::Sigmoid => f64::INFINITY,
    }
}

/// Input whose pre-activations all lie at least `margin` away from every kink.
pub fn kink_free_input<R: Rng>(net: &Network, margin: f64, rng: &mut R) -> Option<Vec<f64>> {
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x).unwrap();
        let clear = net.layers().iter().zip(&cache.pre).all(|(layer, pre)| {
            layer
                .activations()
                .iter()
                .zip(pre)
                .all(|(a, &s)| kink_distance(a, s) >= margin)
        });
        if clear {
            return Some(x);
        }
    }
    None
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}
