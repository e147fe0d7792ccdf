//! Order-quality measures: prefix deviation curves, the empirical `σ⋆²`,
//! sample-bias and heterogeneity checks, and the order-dependent
//! convergence bound.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::RngStream;
use crate::orders::{two_level_k_shuffle, UpdateSequence};
use crate::problems::{FiniteSum, Flattened, TwoLevel};
use crate::vector::{norm_sq, ParameterVector};

/// Component gradient deviations `∇f_i(x) − ∇f(x)` at a fixed point, using
/// exact gradients. Build once, then evaluate many orders cheaply.
#[derive(Debug, Clone)]
pub struct DeviationTable {
    dim: usize,
    rows: Vec<f64>,
    grad_norm_sq: f64,
}

impl DeviationTable {
    pub fn new(problem: &dyn FiniteSum, x: &[f64]) -> Self {
        let n = problem.component_count();
        let d = problem.dimension();
        let mut full = vec![0.0; d];
        problem.gradient(x, &mut full);
        let mut rows = vec![0.0; n * d];
        for (i, row) in rows.chunks_exact_mut(d).enumerate() {
            problem.component_gradient(i, x, row);
            row.iter_mut().zip(&full).for_each(|(g, f)| *g -= f);
        }
        Self {
            dim: d,
            rows,
            grad_norm_sq: norm_sq(&full),
        }
    }

    pub fn component_count(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn deviation(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// `‖∇f(x)‖²`
    pub fn grad_norm_sq(&self) -> f64 {
        self.grad_norm_sq
    }

    pub fn phi_curve(&self, order: &UpdateSequence) -> Result<PhiCurve> {
        order.check_range(self.component_count())?;
        let mut prefix = vec![0.0; self.dim];
        let values = order
            .entries()
            .iter()
            .map(|&i| {
                prefix.iter_mut().zip(self.deviation(i)).for_each(|(p, g)| *p += g);
                norm_sq(&prefix)
            })
            .collect();
        Ok(PhiCurve { values })
    }

    pub fn sigma_star_sq(&self, order: &UpdateSequence) -> Result<f64> {
        Ok(self.phi_curve(order)?.max())
    }

    /// Mean squared deviation `(1/N) Σ ‖∇f_i − ∇f‖²`.
    pub fn mean_deviation_sq(&self) -> f64 {
        self.rows.chunks_exact(self.dim).map(norm_sq).sum::<f64>() / self.component_count() as f64
    }

    /// Largest single-step deviation along `order`.
    pub fn max_deviation_sq(&self, order: &UpdateSequence) -> Result<f64> {
        order.check_range(self.component_count())?;
        Ok(order
            .entries()
            .iter()
            .map(|&i| norm_sq(self.deviation(i)))
            .fold(0.0, f64::max))
    }
}

/// `values[k - 1] = ‖Σ_{i≤k} (∇f_{r_i}(x) − ∇f(x))‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiCurve {
    pub values: Vec<f64>,
}

impl PhiCurve {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn phi_curve(problem: &dyn FiniteSum, order: &UpdateSequence, x: &[f64]) -> Result<PhiCurve> {
    order.check_range(problem.component_count())?;
    DeviationTable::new(problem, x).phi_curve(order)
}

/// Smallest `σ⋆²` for which the prefix bound holds at `(order, x)` with
/// `M⋆ = 0`, i.e. the maximum of the phi curve.
pub fn sigma_star_empirical(problem: &dyn FiniteSum, order: &UpdateSequence, x: &[f64]) -> Result<f64> {
    Ok(phi_curve(problem, order, x)?.max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleBiasReport {
    /// Largest `‖(1/n) Σ (∇f_{r_i} − ∇f)‖² / (¼‖∇f‖²)` over the probes.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Checks `‖(1/n) Σ (∇f_{r_i}(x) − ∇f(x))‖² ≤ ¼‖∇f(x)‖²` at every probe.
/// A sequence in which every component appears equally often has a zero
/// left side exactly.
pub fn check_sample_bias(
    problem: &dyn FiniteSum,
    order: &UpdateSequence,
    probes: &[ParameterVector],
) -> Result<SampleBiasReport> {
    let n = problem.component_count();
    order.check_range(n)?;
    if order.is_empty() {
        return Err(Error::InvalidArgument("empty update sequence".into()));
    }
    let mut counts = vec![0usize; n];
    order.entries().iter().for_each(|&i| counts[i] += 1);
    let balanced = counts.iter().all(|&c| c == counts[0]);

    let mut max_ratio: f64 = 0.0;
    for x in probes {
        if !x.is_finite() {
            return Err(Error::NonFinite("sample bias probe"));
        }
        let table = DeviationTable::new(problem, x);
        let left = if balanced {
            0.0
        } else {
            let mut sum = vec![0.0; problem.dimension()];
            for &i in order.entries() {
                sum.iter_mut().zip(table.deviation(i)).for_each(|(s, g)| *s += g);
            }
            norm_sq(&sum) / (order.len() as f64).powi(2)
        };
        let right = 0.25 * table.grad_norm_sq();
        let ratio = if left == 0.0 {
            0.0
        } else if right == 0.0 {
            f64::INFINITY
        } else {
            left / right
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(SampleBiasReport {
        max_ratio,
        holds: max_ratio <= 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeterogeneityEstimate {
    pub sigma_sq_hat: f64,
    /// Always 0: only the additive term is estimated.
    pub m_hat: f64,
    pub probe_points: usize,
}

/// Max over probes of the mean squared component deviation.
pub fn estimate_heterogeneity(problem: &dyn FiniteSum, probes: &[ParameterVector]) -> Result<HeterogeneityEstimate> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("need at least one probe point".into()));
    }
    let mut sigma_sq_hat: f64 = 0.0;
    for x in probes {
        if !x.is_finite() {
            return Err(Error::NonFinite("heterogeneity probe"));
        }
        sigma_sq_hat = sigma_sq_hat.max(DeviationTable::new(problem, x).mean_deviation_sq());
    }
    Ok(HeterogeneityEstimate {
        sigma_sq_hat,
        m_hat: 0.0,
        probe_points: probes.len(),
    })
}

/// Inputs of the order-dependent convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `f(x₀) − f⋆`
    pub f0: f64,
    pub l: f64,
    pub n: f64,
    pub t: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub p: f64,
    pub m_star: f64,
    pub sigma_star_sq: f64,
}

impl BoundInputs {
    /// Supremum of admissible step sizes, `1 / (8Ln(M⋆ + P/n + 1))`; the
    /// step size must be strictly below it.
    pub fn max_step_size(&self) -> f64 {
        1.0 / (8.0 * self.l * self.n * (self.m_star + self.p / self.n + 1.0))
    }
}

/// `8F₀/(nTγ) + 16γLζ² + 32γ²L²σ⋆²`, an upper bound on the mean squared
/// gradient norm at epoch starts. Refuses step sizes outside the admissible
/// range.
pub fn convergence_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs {
        f0,
        l,
        n,
        t,
        gamma,
        zeta,
        sigma_star_sq,
        ..
    } = *inputs;
    let max_gamma = inputs.max_step_size();
    if !(gamma > 0.0 && gamma < max_gamma) {
        return Err(Error::StepSizeCondition { gamma, max_gamma });
    }
    Ok(8.0 * f0 / (n * t * gamma) + 16.0 * gamma * l * zeta * zeta + 32.0 * gamma * gamma * l * l * sigma_star_sq)
}

/// Mean of the empirical `σ⋆²` over `repeats` independent two-level
/// K-shuffles of the flattened problem at `x`.
pub fn two_level_sigma_star_mean(
    problem: &Arc<dyn TwoLevel>,
    k: usize,
    x: &[f64],
    repeats: usize,
    stream: RngStream,
) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    let shape = problem.shape();
    let table = DeviationTable::new(&Flattened(Arc::clone(problem)), x);
    let mut total = 0.0;
    for r in 0..repeats {
        let seq = two_level_k_shuffle(shape.top, shape.low, k, stream.at(r as u64, 0))?;
        total += table.sigma_star_sq(&seq)?;
    }
    Ok(total / repeats as f64)
}
