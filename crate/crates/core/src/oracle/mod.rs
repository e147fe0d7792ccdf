//! Noisy gradient oracles `∇F_i(x, ξ) = ∇f_i(x) + ξ` and the random streams
//! that drive every stochastic choice in the library.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{FiniteSum, TwoLevel};
use crate::vector::norm_sq;

mod stream;

pub use stream::{Purpose, RngStream};

/// Zero-mean noise with `E‖ξ‖² = ζ² + P‖∇f(x)‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub zeta: f64,
    #[serde(rename = "P")]
    pub p: f64,
}

impl NoiseSpec {
    pub fn new(zeta: f64, p: f64) -> Result<Self> {
        if !(zeta >= 0.0 && zeta.is_finite() && p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise parameters must be finite and >= 0 (zeta={zeta}, P={p})"
            )));
        }
        Ok(Self { zeta, p })
    }

    pub fn is_zero(&self) -> bool {
        self.zeta == 0.0 && self.p == 0.0
    }
}

/// Gradient access used by the engine and the greedy chooser.
#[derive(Debug, Clone)]
pub enum Oracle {
    /// Returns the exact component gradient.
    Exact,
    /// Isotropic Gaussian noise; per-coordinate variance
    /// `(ζ² + P‖∇f(x)‖²) / d` makes the variance bound hold with equality.
    Gaussian(NoiseSpec),
    /// For a top-level function `f_i`, returns `∇h_{i,j}(x)` with `j` drawn
    /// uniformly from `[m]`. The problem passed to [`Oracle::query`] must be
    /// the top-level view of the wrapped two-level problem.
    InternalSgd(Arc<dyn TwoLevel>),
}

impl Oracle {
    pub fn gaussian(zeta: f64, p: f64) -> Result<Self> {
        let spec = NoiseSpec::new(zeta, p)?;
        Ok(if spec.is_zero() {
            Oracle::Exact
        } else {
            Oracle::Gaussian(spec)
        })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Oracle::Exact)
    }

    /// Writes a (possibly noisy) gradient of component `i` at `x` into `out`.
    pub fn query(
        &self,
        problem: &dyn FiniteSum,
        i: usize,
        x: &[f64],
        stream: RngStream,
        out: &mut [f64],
    ) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("oracle query"));
        }
        match self {
            Oracle::Exact => problem.component_gradient(i, x, out),
            Oracle::Gaussian(spec) => {
                problem.component_gradient(i, x, out);
                let mut variance = spec.zeta * spec.zeta;
                if spec.p > 0.0 {
                    let mut full = vec![0.0; x.len()];
                    problem.gradient(x, &mut full);
                    variance += spec.p * norm_sq(&full);
                }
                let std = (variance / x.len() as f64).sqrt();
                let mut rng = stream.with_purpose(Purpose::OracleNoise).rng();
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *o += std * z;
                }
            }
            Oracle::InternalSgd(two_level) => {
                Self::query_internal_sgd(two_level.as_ref(), i, x, stream, out)?;
            }
        }
        Ok(())
    }

    pub fn query_vec(&self, problem: &dyn FiniteSum, i: usize, x: &[f64], stream: RngStream) -> Result<Vec<f64>> {
        let mut out = vec![0.0; problem.dimension()];
        self.query(problem, i, x, stream, &mut out)?;
        Ok(out)
    }

    /// Gradient of a uniformly drawn low-level function of top index `i`.
    pub fn query_internal_sgd(
        problem: &dyn TwoLevel,
        i: usize,
        x: &[f64],
        stream: RngStream,
        out: &mut [f64],
    ) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("oracle query"));
        }
        let m = problem.low_count();
        let j = if m == 1 {
            0
        } else {
            stream.with_purpose(Purpose::LowLevelSample).rng().random_range(0..m)
        };
        problem.low_gradient(i, j, x, out);
        Ok(())
    }
}
