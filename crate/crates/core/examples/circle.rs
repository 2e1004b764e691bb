//! Trains one circle-classification model and prints its metrics.
//!
//! `cargo run --release -p deepspline --example circle -- [spline|relu|leaky_relu|prelu] [width] [seed] [epochs] [lr] [lambda]`

use deepspline::data::{error_rate, gen_circle};
use deepspline::lipschitz::bound_euclidean;
use deepspline::optim::{build_network, train, HiddenKind, Lambda, TrainConfig};
use deepspline::rng::{stream, STREAM_INIT, STREAM_TEST_DATA, STREAM_TRAIN_DATA};

fn main() -> deepspline::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let hidden = match arg(0, "spline").as_str() {
        "relu" => HiddenKind::Relu,
        "leaky_relu" => HiddenKind::LeakyRelu,
        "prelu" => HiddenKind::Prelu,
        _ => HiddenKind::Spline,
    };
    let width: usize = arg(1, "2").parse().unwrap();
    let seed: u64 = arg(2, "0").parse().unwrap();
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    cfg.epochs = arg(3, "1000").parse().unwrap();
    cfg.learning_rate = arg(4, "0.001").parse().unwrap();
    if let Some(l) = args.get(5) {
        cfg.lambda = Lambda::Fixed(l.parse().unwrap());
    }
    if hidden != HiddenKind::Spline && args.get(5).is_none() {
        cfg.lambda = Lambda::Fixed(0.0);
    }

    let train_set = gen_circle(1000, &mut stream(seed, STREAM_TRAIN_DATA));
    let test_set = gen_circle(10_000, &mut stream(seed, STREAM_TEST_DATA));
    let grid = cfg.knot_grid()?;
    let net = build_network(&[2, width, 1], hidden, &grid, &mut stream(seed, STREAM_INIT))?;
    let t = std::time::Instant::now();
    let out = train(&net, &train_set, &cfg)?;
    let last = out.history.epochs.last();
    println!(
        "lambda={:.3e} train_err={:.2} test_err={:.2} params={} nnz={} bound={:.3} removed={} loss={:.4} time={:.1?}",
        out.lambda,
        error_rate(&out.network, &train_set)?,
        error_rate(&out.network, &test_set)?,
        out.network.param_count(),
        out.network.nonzero_coeffs(),
        bound_euclidean(&out.network, cfg.outer_norm).bound,
        out.sparsify_removed,
        last.map_or(f64::NAN, |r| r.loss),
        t.elapsed()
    );
    Ok(())
}
