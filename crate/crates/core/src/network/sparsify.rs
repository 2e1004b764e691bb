use super::{data_loss, Activation, DataTerm, Network};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SparsifyOutcome {
    pub network: Network,
    /// Number of ReLU coefficients set to zero.
    pub removed: usize,
    /// Mean training loss before and after.
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Zeroes spline ReLU coefficients in order of increasing magnitude while the
/// mean training loss stays within `(1 + rel_budget)` of its starting value.
/// Stops at the first coefficient whose removal would break the budget.
pub fn sparsify(net: &Network, train: &Dataset, rel_budget: f64) -> Result<SparsifyOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(rel_budget >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sparsification budget must be nonnegative, got {rel_budget}"
        )));
    }
    let base = data_loss(net, train, DataTerm::Mean)?;
    let limit = base * (1.0 + rel_budget);

    let mut candidates: Vec<(f64, usize, usize, usize)> = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        for (n, act) in layer.activations().iter().enumerate() {
            if let Activation::Spline(s) = act {
                for (k, &a) in s.coeffs().iter().enumerate() {
                    if a != 0.0 {
                        candidates.push((a.abs(), l, n, k));
                    }
                }
            }
        }
    }
    // Stable: ties keep network order.
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut current = net.clone();
    let mut current_loss = base;
    let mut removed = 0;
    for (_, l, n, k) in candidates {
        let mut trial = current.clone();
        if let Activation::Spline(s) = &mut trial.layers_mut()[l].activations_mut()[n] {
            s.coeffs_mut()[k] = 0.0;
        }
        let loss = data_loss(&trial, train, DataTerm::Mean)?;
        if loss <= limit {
            current = trial;
            current_loss = loss;
            removed += 1;
        } else {
            break;
        }
    }
    Ok(SparsifyOutcome {
        network: current,
        removed,
        loss_before: base,
        loss_after: current_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{DenseLayer, Matrix};
    use crate::spline::DeepSpline;

    fn net_with_coeffs(coeffs: Vec<f64>) -> Network {
        let hidden = DenseLayer::new(
            Matrix::from_rows(&[vec![1.0, 0.5]]).unwrap(),
            None,
            vec![Activation::Spline(
                DeepSpline::new(vec![-0.5, 0.5], coeffs, 0.3, 0.0).unwrap(),
            )],
        )
        .unwrap();
        let out = DenseLayer::new(
            Matrix::from_rows(&[vec![4.0]]).unwrap(),
            Some(vec![-0.5]),
            vec![Activation::Sigmoid],
        )
        .unwrap();
        Network::new(vec![hidden, out]).unwrap()
    }

    fn toy_data() -> Dataset {
        Dataset::new(
            vec![vec![0.9, 0.1], vec![-0.8, 0.3], vec![0.2, -0.7], vec![0.6, 0.6]],
            vec![1, 0, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn drops_negligible_coefficient() {
        let net = net_with_coeffs(vec![1e-12, 2.0]);
        let out = sparsify(&net, &toy_data(), 0.01).unwrap();
        let s = out.network.splines().next().unwrap();
        assert_eq!(s.coeffs()[0], 0.0);
        assert_eq!(s.coeffs()[1], 2.0);
        assert!((out.loss_after - out.loss_before).abs() < 1e-9);
        assert!(out.loss_after <= 1.01 * out.loss_before);
    }

    #[test]
    fn zero_budget_only_removes_free_coefficients() {
        // Both inputs sit above both knots, so every coefficient moves the loss.
        let data = Dataset::new(vec![vec![0.9, 0.1], vec![0.6, 0.6]], vec![1, 1]).unwrap();
        let net = net_with_coeffs(vec![0.7, 2.0]);
        let out = sparsify(&net, &data, 0.0).unwrap();
        assert_eq!(out.removed, 0);
        assert_eq!(out.network, net);
    }

    #[test]
    fn empty_train_set_rejected() {
        let net = net_with_coeffs(vec![1.0, 1.0]);
        assert!(matches!(
            sparsify(&net, &Dataset::empty(2), 0.01),
            Err(Error::EmptyDataset)
        ));
    }
}
