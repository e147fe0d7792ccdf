use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::vector::{norm_sq, ParameterVector};

use super::{FiniteSum, TwoLevelShape};

const POWER_ITERATION_TOL: f64 = 1e-12;
const POWER_ITERATION_MAX: usize = 100_000;

/// A problem whose `N` top-level functions are each the mean of `m`
/// low-level functions: `f_i = (1/m) Σ_j h_{i,j}`.
pub trait TwoLevel: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;
    fn top_count(&self) -> usize;
    fn low_count(&self) -> usize;
    fn smoothness(&self) -> f64;

    fn low_value(&self, i: usize, j: usize, x: &[f64]) -> f64;
    fn low_gradient(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]);

    fn top_value(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.low_count();
        (0..m).map(|j| self.low_value(i, j, x)).sum::<f64>() / m as f64
    }

    fn top_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let m = self.low_count();
        let mut buf = vec![0.0; self.dimension()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..m {
            self.low_gradient(i, j, x, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, g)| *o += g);
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.top_count();
        (0..n).map(|i| self.top_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.top_count();
        let mut buf = vec![0.0; self.dimension()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            self.top_gradient(i, x, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, g)| *o += g);
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
    }

    fn optimum_value(&self) -> Option<f64> {
        None
    }

    fn optimum_point(&self) -> Option<ParameterVector> {
        None
    }

    /// Declared top-level heterogeneity, when known analytically.
    fn sigma_top(&self) -> Option<f64> {
        None
    }

    fn sigma_low(&self) -> Option<f64> {
        None
    }

    fn shape(&self) -> TwoLevelShape {
        TwoLevelShape {
            top: self.top_count(),
            low: self.low_count(),
        }
    }
}

/// Curvature of the shared quadratic part `½⟨Ax, x⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curvature {
    /// `A = tridiag(−1, 2, −1)`.
    Band,
    /// `A = I`.
    Identity,
}

/// `h_{i,j}(x) = ½⟨Ax,x⟩ + (λ/2)‖x‖² ± σ_top⟨1,x⟩ ± σ_low⟨1,x⟩`, with the
/// top sign positive for `i < N/2` and the low sign positive for `j < m/2`.
#[derive(Debug, Clone)]
pub struct TwoLevelQuadratic {
    dim: usize,
    curvature: Curvature,
    lambda: f64,
    top: usize,
    low: usize,
    sigma_top: f64,
    sigma_low: f64,
    smoothness: f64,
}

impl TwoLevelQuadratic {
    /// Band-diagonal benchmark with two top-level functions.
    pub fn band(dim: usize, lambda: f64, sigma_top: f64, sigma_low: f64, m: usize) -> Result<Self> {
        Self::build(dim, Curvature::Band, lambda, 2, m, sigma_top, sigma_low)
    }

    /// One-dimensional `x²/2` base with signed shifts at both levels.
    pub fn signed(n: usize, m: usize, sigma_top: f64, sigma_low: f64) -> Result<Self> {
        Self::build(1, Curvature::Identity, 0.0, n, m, sigma_top, sigma_low)
    }

    pub fn build(
        dim: usize,
        curvature: Curvature,
        lambda: f64,
        top: usize,
        low: usize,
        sigma_top: f64,
        sigma_low: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if low == 0 || low % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "low-level count m must be even and positive, got {low}"
            )));
        }
        // a single top function carries no sign split
        if top == 0 || (top > 1 && top % 2 != 0) {
            return Err(Error::InvalidArgument(format!(
                "top-level count must be 1 or even, got {top}"
            )));
        }
        for (name, v) in [("lambda", lambda), ("sigma_top", sigma_top), ("sigma_low", sigma_low)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let mut p = Self {
            dim,
            curvature,
            lambda,
            top,
            low,
            sigma_top,
            sigma_low,
            smoothness: 0.0,
        };
        p.smoothness = p.largest_eigenvalue();
        Ok(p)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// `out = (A + λI) x`
    fn hessian_apply(&self, x: &[f64], out: &mut [f64]) {
        match self.curvature {
            Curvature::Identity => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = (1.0 + self.lambda) * xi;
                }
            }
            Curvature::Band => {
                let d = self.dim;
                for k in 0..d {
                    let mut v = (2.0 + self.lambda) * x[k];
                    if k > 0 {
                        v -= x[k - 1];
                    }
                    if k + 1 < d {
                        v -= x[k + 1];
                    }
                    out[k] = v;
                }
            }
        }
    }

    /// Largest eigenvalue of `A + λI` by power iteration.
    fn largest_eigenvalue(&self) -> f64 {
        if self.curvature == Curvature::Identity || self.dim == 1 {
            let mut out = [0.0];
            self.hessian_apply(&[1.0], &mut out);
            return out[0];
        }
        let d = self.dim;
        // alternating start vector overlaps the top (oscillating) eigenvector
        let mut v: Vec<f64> = (0..d)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + k as f64 / d as f64))
            .collect();
        let n0 = norm_sq(&v).sqrt();
        v.iter_mut().for_each(|a| *a /= n0);
        let mut w = vec![0.0; d];
        let mut estimate = 0.0;
        for _ in 0..POWER_ITERATION_MAX {
            self.hessian_apply(&v, &mut w);
            let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            let nw = norm_sq(&w).sqrt();
            v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / nw);
            let converged = (rayleigh - estimate).abs() <= POWER_ITERATION_TOL * rayleigh.abs();
            estimate = rayleigh;
            if converged {
                break;
            }
        }
        estimate
    }

    fn top_sign(&self, i: usize) -> f64 {
        if self.top == 1 || i < self.top / 2 {
            1.0
        } else {
            -1.0
        }
    }

    fn low_sign(&self, j: usize) -> f64 {
        if j < self.low / 2 {
            1.0
        } else {
            -1.0
        }
    }

    fn base_value(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.dim];
        self.hessian_apply(x, &mut ax);
        0.5 * x.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>()
    }

    fn shift_gradient(&self, shift: f64, x: &[f64], out: &mut [f64]) {
        self.hessian_apply(x, out);
        if shift != 0.0 {
            out.iter_mut().for_each(|o| *o += shift);
        }
    }

    fn top_shift(&self, i: usize) -> f64 {
        if self.top == 1 {
            0.0
        } else {
            self.top_sign(i) * self.sigma_top
        }
    }
}

impl TwoLevel for TwoLevelQuadratic {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn top_count(&self) -> usize {
        self.top
    }

    fn low_count(&self) -> usize {
        self.low
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn low_value(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let ones: f64 = x.iter().sum();
        self.base_value(x) + (self.top_shift(i) + self.low_sign(j) * self.sigma_low) * ones
    }

    fn low_gradient(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        self.shift_gradient(self.top_shift(i) + self.low_sign(j) * self.sigma_low, x, out);
    }

    fn top_value(&self, i: usize, x: &[f64]) -> f64 {
        let ones: f64 = x.iter().sum();
        self.base_value(x) + self.top_shift(i) * ones
    }

    fn top_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.shift_gradient(self.top_shift(i), x, out);
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.base_value(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.hessian_apply(x, out);
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }

    fn optimum_point(&self) -> Option<ParameterVector> {
        Some(ParameterVector::zeros(self.dim))
    }

    fn sigma_top(&self) -> Option<f64> {
        Some(self.sigma_top)
    }

    fn sigma_low(&self) -> Option<f64> {
        Some(self.sigma_low)
    }
}

/// Finite-sum view over the `N` top-level functions.
#[derive(Debug, Clone)]
pub struct TopLevel(pub Arc<dyn TwoLevel>);

/// Finite-sum view over all `N·m` low-level functions, flattened row-major.
#[derive(Debug, Clone)]
pub struct Flattened(pub Arc<dyn TwoLevel>);

impl FiniteSum for TopLevel {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn component_count(&self) -> usize {
        self.0.top_count()
    }

    fn smoothness(&self) -> f64 {
        self.0.smoothness()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.0.top_value(i, x)
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.0.top_gradient(i, x, out)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.0.gradient(x, out)
    }

    fn optimum_value(&self) -> Option<f64> {
        self.0.optimum_value()
    }

    fn optimum_point(&self) -> Option<ParameterVector> {
        self.0.optimum_point()
    }
}

impl FiniteSum for Flattened {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn component_count(&self) -> usize {
        self.0.top_count() * self.0.low_count()
    }

    fn smoothness(&self) -> f64 {
        self.0.smoothness()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let (top, low) = self.0.shape().split(i);
        self.0.low_value(top, low, x)
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let (top, low) = self.0.shape().split(i);
        self.0.low_gradient(top, low, x, out)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.0.gradient(x, out)
    }

    fn optimum_value(&self) -> Option<f64> {
        self.0.optimum_value()
    }

    fn optimum_point(&self) -> Option<ParameterVector> {
        self.0.optimum_point()
    }

    fn two_level_shape(&self) -> Option<TwoLevelShape> {
        Some(self.0.shape())
    }
}

impl TwoLevelQuadratic {
    pub fn into_shared(self) -> Arc<dyn TwoLevel> {
        Arc::new(self)
    }
}
