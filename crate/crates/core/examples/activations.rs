//! Samples every spline activation of a saved model on a regular grid and
//! prints one CSV column per neuron, for plotting the learned shapes.
//!
//! `cargo run --release -p deepspline --example activations -- model.json [lo] [hi] [points]`

use deepspline::network::Network;

fn main() -> deepspline::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.first() else {
        eprintln!("usage: activations <model.json> [lo] [hi] [points]");
        std::process::exit(2);
    };
    let num = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (lo, hi) = (num(1, -1.5), num(2, 1.5));
    let points = num(3, 301.0) as usize;

    let net = Network::load(path)?;
    let mut columns = Vec::new();
    let mut header = vec!["x".to_string()];
    for (l, layer) in net.layers().iter().enumerate() {
        for (n, act) in layer.activations().iter().enumerate() {
            if let Some(s) = act.as_spline() {
                header.push(format!("layer{}_neuron{}", l + 1, n + 1));
                columns.push(s);
            }
        }
    }
    println!("{}", header.join(","));
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64;
        let row: Vec<String> = std::iter::once(x)
            .chain(columns.iter().map(|s| s.eval(x)))
            .map(|v| format!("{v}"))
            .collect();
        println!("{}", row.join(","));
    }
    Ok(())
}
