//! Finite-sum problems `f(x) = (1/N) Σ f_i(x)` with closed-form component
//! gradients.
//!
//! Component indices are 0-based everywhere inside the library. Files and the
//! CLI use 1-based indices and convert at the boundary.

use std::fmt;
use std::sync::Arc;

use crate::vector::ParameterVector;

mod classification;
mod signed;
mod two_level;

pub use classification::{Batching, Classification, ClassificationSpec};
pub use signed::SignedExample;
pub use two_level::{Curvature, Flattened, TopLevel, TwoLevel, TwoLevelQuadratic};

pub type SharedProblem = Arc<dyn FiniteSum>;

/// Shape of a flattened two-level problem: `top` functions with `low`
/// sub-functions each. Flattened index of `(i, j)` is `i * low + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoLevelShape {
    pub top: usize,
    pub low: usize,
}

impl TwoLevelShape {
    pub fn flat_index(&self, top: usize, low: usize) -> usize {
        top * self.low + low
    }

    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat / self.low, flat % self.low)
    }

    pub fn len(&self) -> usize {
        self.top * self.low
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A finite-sum objective. Implementations are immutable after construction
/// and gradient evaluation is pure, so problems are shared freely across
/// concurrent runs.
pub trait FiniteSum: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;

    fn component_count(&self) -> usize;

    /// Lipschitz constant of every component gradient.
    fn smoothness(&self) -> f64;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out` (overwriting it).
    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.component_count();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.component_count();
        let mut buf = vec![0.0; self.dimension()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            self.component_gradient(i, x, &mut buf);
            for (o, g) in out.iter_mut().zip(&buf) {
                *o += g;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    /// `f⋆`, when known analytically.
    fn optimum_value(&self) -> Option<f64> {
        None
    }

    fn optimum_point(&self) -> Option<ParameterVector> {
        None
    }

    /// `Some` when the components are the flattened `(top, low)` pairs of a
    /// two-level problem.
    fn two_level_shape(&self) -> Option<TwoLevelShape> {
        None
    }

    /// Problems whose components are re-drawn every epoch (standard
    /// batching) return the epoch's instance here. The global objective must
    /// not change.
    fn for_epoch(&self, _epoch: u64, _seed: u64) -> Option<SharedProblem> {
        None
    }
}

/// Allocating convenience wrappers.
pub trait FiniteSumExt: FiniteSum {
    fn component_gradient_vec(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.component_gradient(i, x, &mut out);
        out
    }

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.gradient(x, &mut out);
        out
    }
}

impl<P: FiniteSum + ?Sized> FiniteSumExt for P {}
