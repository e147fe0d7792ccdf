use crate::error::{Error, Result};
use crate::vector::ParameterVector;

use super::FiniteSum;

/// One-dimensional example with `f_i = x²/2 + σx` for the first half of the
/// components and `x²/2 − σx` for the second half. The global objective is
/// `x²/2` regardless of `σ`, while every component deviates by exactly `±σ`.
#[derive(Debug, Clone)]
pub struct SignedExample {
    n: usize,
    sigma: f64,
}

impl SignedExample {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "signed example needs an even positive component count, got {n}"
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { n, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn sign(&self, i: usize) -> f64 {
        if i < self.n / 2 {
            1.0
        } else {
            -1.0
        }
    }
}

impl FiniteSum for SignedExample {
    fn dimension(&self) -> usize {
        1
    }

    fn component_count(&self) -> usize {
        self.n
    }

    fn smoothness(&self) -> f64 {
        1.0
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0] + self.sign(i) * self.sigma * x[0]
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] + self.sign(i) * self.sigma;
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0]
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }

    fn optimum_point(&self) -> Option<ParameterVector> {
        Some(ParameterVector::zeros(1))
    }
}
