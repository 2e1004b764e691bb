//! Learnable linear-spline ("deep-spline") activations.
//!
//! A spline is stored in its ReLU expansion
//!
//! ```text
//! σ(x) = Σ_k a_k · max(x − τ_k, 0) + b1 · x + b2
//! ```
//!
//! with fixed, strictly increasing knots `τ_k`. The ReLU weights `a_k` are the
//! slope jumps at the knots, so the second-order total variation is `‖a‖₁` and
//! the BV² norm is `‖a‖₁ + |σ(0)| + |σ(1)|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which one-sided derivative to take at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Gradient (or subgradient) with respect to the trainable spline parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrad {
    pub coeffs: Vec<f64>,
    pub b1: f64,
    pub b2: f64,
}

impl SplineGrad {
    pub fn zeros(k: usize) -> Self {
        Self {
            coeffs: vec![0.0; k],
            b1: 0.0,
            b2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepSpline {
    knots: Vec<f64>,
    coeffs: Vec<f64>,
    b1: f64,
    b2: f64,
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `k` knots evenly spaced over `[lo, hi]`. A single knot sits at the midpoint.
pub fn uniform_grid(k: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidSpline("knot grid needs at least one knot".into()));
    }
    if !(lo.is_finite() && hi.is_finite()) || (k > 1 && lo >= hi) {
        return Err(Error::InvalidSpline(format!(
            "invalid knot span [{lo}, {hi}]"
        )));
    }
    if k == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let step = (hi - lo) / (k - 1) as f64;
    Ok((0..k)
        .map(|i| {
            if i == k - 1 {
                hi
            } else {
                // Snap values that should be exactly zero (e.g. the centre of a
                // symmetric grid) so that canonical inits land on a knot.
                let t = lo + step * i as f64;
                if t.abs() < 1e-12 * step {
                    0.0
                } else {
                    t
                }
            }
        })
        .collect())
}

fn validate_grid(knots: &[f64]) -> Result<()> {
    if knots.is_empty() {
        return Err(Error::InvalidSpline("at least one knot is required".into()));
    }
    if knots.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidSpline("knots must be finite".into()));
    }
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpline(
            "knots must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Index of the grid knot closest to `target`; ties go to the lower index.
fn nearest_knot(knots: &[f64], target: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &t) in knots.iter().enumerate() {
        let d = (t - target).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

impl DeepSpline {
    pub fn new(knots: Vec<f64>, coeffs: Vec<f64>, b1: f64, b2: f64) -> Result<Self> {
        let s = Self {
            knots,
            coeffs,
            b1,
            b2,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks the structural invariants. Called after deserialization too.
    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.knots)?;
        if self.coeffs.len() != self.knots.len() {
            return Err(Error::InvalidSpline(format!(
                "{} coefficients for {} knots",
                self.coeffs.len(),
                self.knots.len()
            )));
        }
        if self.coeffs.iter().any(|a| !a.is_finite()) || !self.b1.is_finite() || !self.b2.is_finite()
        {
            return Err(Error::InvalidSpline("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// The identity map `σ(x) = x`, expressed on a single knot at 0.
    pub fn identity() -> Self {
        Self {
            knots: vec![0.0],
            coeffs: vec![0.0],
            b1: 1.0,
            b2: 0.0,
        }
    }

    /// Absolute value on the given grid: `2·ReLU(x − τ₀) − x` where `τ₀` is the
    /// grid knot nearest to 0.
    pub fn init_abs(grid: &[f64]) -> Result<Self> {
        validate_grid(grid)?;
        let mut coeffs = vec![0.0; grid.len()];
        coeffs[nearest_knot(grid, 0.0)] += 2.0;
        Ok(Self {
            knots: grid.to_vec(),
            coeffs,
            b1: -1.0,
            b2: 0.0,
        })
    }

    /// Soft-thresholding with threshold 1/2 on the given grid:
    /// `x + 1/2 − ReLU(x + 1/2) + ReLU(x − 1/2)`, using nearest grid knots.
    pub fn init_soft(grid: &[f64]) -> Result<Self> {
        validate_grid(grid)?;
        let mut coeffs = vec![0.0; grid.len()];
        coeffs[nearest_knot(grid, -0.5)] += -1.0;
        coeffs[nearest_knot(grid, 0.5)] += 1.0;
        Ok(Self {
            knots: grid.to_vec(),
            coeffs,
            b1: 1.0,
            b2: 0.5,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn set_affine(&mut self, b1: f64, b2: f64) {
        self.b1 = b1;
        self.b2 = b2;
    }

    pub fn num_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn nonzero_coeffs(&self) -> usize {
        self.coeffs.iter().filter(|a| **a != 0.0).count()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.b1 * x + self.b2;
        for (&a, &t) in self.coeffs.iter().zip(&self.knots) {
            acc += a * relu(x - t);
        }
        acc
    }

    /// Right derivative counts knots with `τ ≤ x`, left derivative those with `τ < x`.
    pub fn one_sided_derivative(&self, x: f64, side: Side) -> f64 {
        let mut slope = self.b1;
        for (&a, &t) in self.coeffs.iter().zip(&self.knots) {
            let active = match side {
                Side::Right => t <= x,
                Side::Left => t < x,
            };
            if active {
                slope += a;
            }
        }
        slope
    }

    /// Partial derivatives of `eval(x)` with respect to `(a, b1, b2)`.
    pub fn param_gradients(&self, x: f64) -> SplineGrad {
        SplineGrad {
            coeffs: self.knots.iter().map(|&t| relu(x - t)).collect(),
            b1: x,
            b2: 1.0,
        }
    }

    /// Second-order total variation, `‖a‖₁`.
    pub fn tv2(&self) -> f64 {
        self.coeffs.iter().map(|a| a.abs()).sum()
    }

    pub fn bv2_norm(&self) -> f64 {
        self.tv2() + self.eval(1.0).abs() + self.eval(0.0).abs()
    }

    /// A subgradient of [`bv2_norm`](Self::bv2_norm) with `sign(0) = 0`.
    pub fn bv2_subgradient(&self) -> SplineGrad {
        let s1 = sign0(self.eval(1.0));
        let s0 = sign0(self.eval(0.0));
        SplineGrad {
            coeffs: self
                .coeffs
                .iter()
                .zip(&self.knots)
                .map(|(&a, &t)| sign0(a) + s1 * relu(1.0 - t) + s0 * relu(-t))
                .collect(),
            b1: s1,
            b2: s1 + s0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f_abs() -> DeepSpline {
        DeepSpline::new(vec![0.0], vec![2.0], -1.0, 0.0).unwrap()
    }

    fn f_soft() -> DeepSpline {
        DeepSpline::new(vec![-0.5, 0.5], vec![-1.0, 1.0], 1.0, 0.5).unwrap()
    }

    #[test]
    fn eval_canonical_shapes() {
        assert_eq!(f_abs().eval(-2.0), 2.0);
        assert_eq!(f_soft().eval(0.3), 0.0);
        assert_eq!(f_soft().eval(2.0), 1.5);
        assert_eq!(f_soft().eval(-2.0), -1.5);
    }

    #[test]
    fn one_sided_derivatives() {
        assert_eq!(f_abs().one_sided_derivative(0.0, Side::Right), 1.0);
        assert_eq!(f_abs().one_sided_derivative(0.0, Side::Left), -1.0);
        for side in [Side::Left, Side::Right] {
            assert_eq!(f_soft().one_sided_derivative(1.0, side), 1.0);
        }
        let affine = DeepSpline::new(vec![0.0], vec![0.0], 2.0, 0.0).unwrap();
        for x in [-3.0, 0.0, 0.7] {
            assert_eq!(affine.one_sided_derivative(x, Side::Left), 2.0);
            assert_eq!(affine.one_sided_derivative(x, Side::Right), 2.0);
        }
    }

    #[test]
    fn param_gradients_single_knot() {
        let s = DeepSpline::new(vec![0.0], vec![0.3], 0.1, 0.2).unwrap();
        let g = s.param_gradients(1.0);
        assert_eq!(g.coeffs, vec![1.0]);
        assert_eq!((g.b1, g.b2), (1.0, 1.0));
        let g = s.param_gradients(-1.0);
        assert_eq!(g.coeffs, vec![0.0]);
        assert_eq!((g.b1, g.b2), (-1.0, 1.0));
    }

    #[test]
    fn norms() {
        assert_eq!(f_soft().tv2(), 2.0);
        assert_eq!(f_abs().tv2(), 2.0);
        assert_eq!(DeepSpline::new(vec![0.0, 1.0], vec![0.0, 0.0], 1.0, 1.0).unwrap().tv2(), 0.0);
        assert_eq!(f_abs().bv2_norm(), 3.0);
        assert_eq!(f_soft().bv2_norm(), 2.5);
        let affine = DeepSpline::new(vec![0.0], vec![0.0], 2.0, 1.0).unwrap();
        assert_eq!(affine.bv2_norm(), 4.0);
    }

    #[test]
    fn subgradient_cases() {
        let zero = DeepSpline::new(vec![0.0], vec![0.0], 0.0, 0.0).unwrap();
        assert_eq!(zero.bv2_subgradient(), SplineGrad::zeros(1));

        let s = DeepSpline::new(vec![0.0], vec![2.0], 0.0, 0.0).unwrap();
        let g = s.bv2_subgradient();
        assert_eq!(g.coeffs, vec![2.0]);
        assert_eq!((g.b1, g.b2), (1.0, 1.0));
    }

    #[test]
    fn inits_on_default_grid() {
        let grid = uniform_grid(21, -1.0, 1.0).unwrap();
        assert_eq!(grid[10], 0.0);
        assert_eq!(grid[5], -0.5);
        assert_eq!(grid[15], 0.5);
        let abs = DeepSpline::init_abs(&grid).unwrap();
        let soft = DeepSpline::init_soft(&grid).unwrap();
        assert_eq!(abs.bv2_norm(), 3.0);
        assert_eq!(soft.bv2_norm(), 2.5);
        assert_eq!(abs.eval(0.37), 0.37);
        for x in [-1.7, -0.5, -0.2, 0.0, 0.49, 0.5, 0.9, 3.0] {
            assert_eq!(abs.eval(x), f_abs().eval(x));
            assert_eq!(soft.eval(x), f_soft().eval(x));
        }
    }

    #[test]
    fn init_uses_nearest_knot_off_grid() {
        // 11 knots: spacing 0.2, so ±0.5 fall between knots; ties go low.
        let grid = uniform_grid(11, -1.0, 1.0).unwrap();
        let soft = DeepSpline::init_soft(&grid).unwrap();
        assert_eq!(soft.nonzero_coeffs(), 2);
        // Single knot: both soft knots collapse and cancel.
        let soft1 = DeepSpline::init_soft(&[0.0]).unwrap();
        assert_eq!(soft1.coeffs(), &[0.0]);
        assert_eq!(soft1.eval(2.0), 2.5);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(DeepSpline::init_abs(&[]).is_err());
        assert!(uniform_grid(0, -1.0, 1.0).is_err());
        assert!(DeepSpline::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.0, 0.0).is_err());
        assert!(DeepSpline::new(vec![0.0, 1.0], vec![1.0], 0.0, 0.0).is_err());
        assert!(DeepSpline::new(vec![f64::NAN], vec![1.0], 0.0, 0.0).is_err());
        assert!(DeepSpline::new(vec![0.0], vec![f64::INFINITY], 0.0, 0.0).is_err());
    }
}
