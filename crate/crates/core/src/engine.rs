//! Epoch-based gradient descent: per epoch, pick an update sequence and take
//! one oracle step per entry, recording metrics as the run progresses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::sigma_star_empirical;
use crate::oracle::{Oracle, Purpose, RngStream};
use crate::orders::{OrderStrategy, StrategySpec};
use crate::problems::{FiniteSum, SharedProblem};
use crate::vector::{axpy, dist_sq, norm_sq, ParameterVector};

/// Runs whose iterate norm exceeds `DIVERGENCE_FACTOR · (1 + ‖x₀‖)` are
/// declared diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    /// `‖x‖₂`
    ParamNorm,
    /// `‖∇f(x)‖²`
    GradNormSq,
    /// `f(x) − f⋆`
    FGap,
}

/// The target is met once the metric is strictly below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub metric: TargetMetric,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSchedule {
    pub gamma: f64,
    pub epochs: u64,
    /// Epochs after which the step size is multiplied by `decay_factor`.
    pub decay_epochs: Vec<u64>,
    pub decay_factor: f64,
    pub target: Option<Target>,
    /// Hard cap on inner steps; the run stops mid-epoch when reached.
    pub max_steps: Option<u64>,
}

impl EngineSchedule {
    pub fn constant(gamma: f64, epochs: u64) -> Self {
        Self {
            gamma,
            epochs,
            decay_epochs: Vec::new(),
            decay_factor: 1.0,
            target: None,
            max_steps: None,
        }
    }

    pub fn with_target(mut self, metric: TargetMetric, threshold: f64) -> Self {
        self.target = Some(Target { metric, threshold });
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("engine", format!("key `gamma` must be positive, got {}", self.gamma)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config("engine", "key `decay_factor` must lie in (0, 1]"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("engine", "key `decay_epochs` must be strictly increasing"));
        }
        if self.decay_epochs.iter().any(|&e| e > self.epochs) {
            return Err(Error::config("engine", "key `decay_epochs` has entries beyond `epochs`"));
        }
        if let Some(t) = &self.target {
            if !t.threshold.is_finite() {
                return Err(Error::config("engine", "target threshold must be finite"));
            }
        }
        Ok(())
    }

    /// Step size in effect during epoch `t` (1-based).
    pub fn gamma_at(&self, t: u64) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e < t).count();
        self.gamma * self.decay_factor.powi(decays as i32)
    }
}

/// What to keep while running. Long sweeps keep nothing but the summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub record_steps: bool,
    pub record_epochs: bool,
    /// Measure `σ⋆²` of every epoch's order at the epoch-start iterate.
    pub measure_sigma_star: bool,
    /// Keep every inner iterate (testing aid).
    pub keep_iterates: bool,
}

impl RunOptions {
    pub fn full() -> Self {
        Self {
            record_steps: true,
            record_epochs: true,
            measure_sigma_star: false,
            keep_iterates: false,
        }
    }

    pub fn summary_only() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub global_step: u64,
    pub epoch: u64,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub dist_to_opt: Option<f64>,
    pub x_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Metrics at the end of the epoch.
    pub f: f64,
    pub grad_norm_sq: f64,
    /// `Σ_i ‖x_t − x_t^i‖²` over the epoch's inner iterates.
    pub v_t: f64,
    pub sigma_star_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub strategy: String,
    pub initial_f: f64,
    pub initial_grad_norm_sq: f64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub steps_to_target: Option<u64>,
    pub diverged: bool,
    pub total_steps: u64,
    pub final_x: ParameterVector,
    pub final_f: f64,
    pub final_grad_norm_sq: f64,
    /// Inner iterates `x_t^1..x_t^n` per epoch, when requested.
    #[serde(skip)]
    pub iterates: Option<Vec<Vec<ParameterVector>>>,
}

impl RunTrace {
    /// Mean of `‖∇f(x_t)‖²` over the epoch-start iterates `x₀ … x_{T−1}`.
    pub fn mean_epoch_start_grad_norm_sq(&self) -> f64 {
        let t = self.epochs.len();
        if t == 0 {
            return self.initial_grad_norm_sq;
        }
        let sum: f64 = self.initial_grad_norm_sq + self.epochs[..t - 1].iter().map(|e| e.grad_norm_sq).sum::<f64>();
        sum / t as f64
    }

    /// Largest per-epoch `σ⋆²`, when measured.
    pub fn max_sigma_star_sq(&self) -> Option<f64> {
        self.epochs
            .iter()
            .map(|e| e.sigma_star_sq)
            .try_fold(0.0f64, |acc, s| s.map(|v| acc.max(v)))
    }
}

struct Metrics<'a> {
    problem: &'a dyn FiniteSum,
    optimum: Option<ParameterVector>,
    optimum_value: Option<f64>,
    grad: Vec<f64>,
}

impl<'a> Metrics<'a> {
    fn new(problem: &'a dyn FiniteSum) -> Self {
        Self {
            problem,
            optimum: problem.optimum_point(),
            optimum_value: problem.optimum_value(),
            grad: vec![0.0; problem.dimension()],
        }
    }

    fn value_and_grad(&mut self, x: &[f64]) -> (f64, f64) {
        self.problem.gradient(x, &mut self.grad);
        (self.problem.value(x), norm_sq(&self.grad))
    }

    fn step(&mut self, x: &[f64], global_step: u64, epoch: u64) -> StepRecord {
        let (f, grad_norm_sq) = self.value_and_grad(x);
        StepRecord {
            global_step,
            epoch,
            f,
            grad_norm_sq,
            dist_to_opt: self.optimum.as_ref().map(|o| dist_sq(x, o).sqrt()),
            x_norm: norm_sq(x).sqrt(),
        }
    }

    fn target_met(&mut self, target: &Target, x: &[f64]) -> bool {
        let value = match target.metric {
            TargetMetric::ParamNorm => norm_sq(x).sqrt(),
            TargetMetric::GradNormSq => {
                self.problem.gradient(x, &mut self.grad);
                norm_sq(&self.grad)
            }
            TargetMetric::FGap => self.problem.value(x) - self.optimum_value.unwrap_or(f64::NAN),
        };
        value < target.threshold
    }
}

/// Executes one run of epoch-based gradient descent.
pub fn run(
    problem: &SharedProblem,
    oracle: &Oracle,
    strategy: &StrategySpec,
    schedule: &EngineSchedule,
    x0: &ParameterVector,
    seed: u64,
    options: RunOptions,
) -> Result<RunTrace> {
    schedule.validate()?;
    let mut order_source = OrderStrategy::new(strategy.clone())?;
    order_source.check_problem(problem.as_ref())?;
    let d = problem.dimension();
    if x0.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "x0 has dimension {} but the problem has {d}",
            x0.dim()
        )));
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("engine start point"));
    }
    if let Some(Target { metric: TargetMetric::FGap, .. }) = schedule.target {
        if problem.optimum_value().is_none() {
            return Err(Error::config("engine", "target metric f_gap needs a problem with known optimum"));
        }
    }

    let mut metrics = Metrics::new(problem.as_ref());
    let divergence_limit = DIVERGENCE_FACTOR * (1.0 + x0.norm());
    let (initial_f, initial_grad_norm_sq) = metrics.value_and_grad(x0);

    let mut x = x0.clone();
    let mut grad = vec![0.0; d];
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut iterates = options.keep_iterates.then(Vec::new);
    let mut steps_to_target = match &schedule.target {
        Some(t) if metrics.target_met(t, &x) => Some(0),
        _ => None,
    };
    let mut diverged = false;
    let mut global_step = 0u64;
    let max_steps = schedule.max_steps.unwrap_or(u64::MAX);

    'epochs: for t in 1..=schedule.epochs {
        if steps_to_target.is_some() || global_step >= max_steps {
            break;
        }
        let epoch_problem = problem.for_epoch(t, seed);
        let epoch_problem: &dyn FiniteSum = epoch_problem.as_deref().unwrap_or(problem.as_ref());
        let gamma = schedule.gamma_at(t);
        let x_start = x.clone();
        let order = match order_source.next_epoch_order(epoch_problem, oracle, &x_start, t, seed) {
            Ok(order) => order,
            Err(Error::NonFinite(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let sigma_star_sq = if options.measure_sigma_star {
            Some(sigma_star_empirical(epoch_problem, &order, &x_start)?)
        } else {
            None
        };
        let mut v_t = 0.0;
        let mut epoch_iterates = iterates.as_ref().map(|_| Vec::with_capacity(order.len()));
        let noise = RngStream::new(seed, Purpose::OracleNoise);

        for (i, &component) in order.entries().iter().enumerate() {
            if options.record_epochs {
                v_t += dist_sq(&x_start, &x);
            }
            if let Some(its) = epoch_iterates.as_mut() {
                its.push(x.clone());
            }
            match oracle.query(epoch_problem, component, &x, noise.at(t, i as u64), &mut grad) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            axpy(-gamma, &grad, &mut x);
            global_step += 1;

            let x_norm = x.norm();
            if !(x_norm.is_finite() && x_norm <= divergence_limit) {
                diverged = true;
            }
            if options.record_steps {
                let rec = metrics.step(&x, global_step, t);
                if !(rec.f.is_finite() && rec.grad_norm_sq.is_finite()) {
                    diverged = true;
                }
                steps.push(rec);
            }
            if diverged {
                break 'epochs;
            }
            if let Some(target) = &schedule.target {
                if steps_to_target.is_none() && metrics.target_met(target, &x) {
                    steps_to_target = Some(global_step);
                }
            }
            if steps_to_target.is_some() || global_step >= max_steps {
                break;
            }
        }

        if let (Some(all), Some(its)) = (iterates.as_mut(), epoch_iterates) {
            all.push(its);
        }
        if options.record_epochs {
            let (f, grad_norm_sq) = metrics.value_and_grad(&x);
            if !(f.is_finite() && grad_norm_sq.is_finite()) {
                diverged = true;
                break;
            }
            epochs.push(EpochRecord {
                epoch: t,
                f,
                grad_norm_sq,
                v_t,
                sigma_star_sq,
            });
        }
    }

    let (final_f, final_grad_norm_sq) = metrics.value_and_grad(&x);
    Ok(RunTrace {
        strategy: strategy.label(),
        initial_f,
        initial_grad_norm_sq,
        steps,
        epochs,
        steps_to_target,
        diverged,
        total_steps: global_step,
        final_x: x,
        final_f,
        final_grad_norm_sq,
        iterates,
    })
}

/// Runs every strategy from the same start point with the same seed. Noise
/// streams are keyed by `(seed, epoch, step)`, so all runs see identical
/// oracle noise at matching positions.
pub fn paired_run(
    problem: &SharedProblem,
    oracle: &Oracle,
    strategies: &[StrategySpec],
    schedule: &EngineSchedule,
    x0: &ParameterVector,
    seed: u64,
    options: RunOptions,
) -> Result<Vec<RunTrace>> {
    strategies
        .iter()
        .map(|s| run(problem, oracle, s, schedule, x0, seed, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problems::SignedExample;

    fn signed(n: usize, sigma: f64) -> SharedProblem {
        Arc::new(SignedExample::new(n, sigma).unwrap())
    }

    #[test]
    fn hand_simulated_epoch() {
        let p = signed(2, 1.0);
        let trace = run(
            &p,
            &Oracle::Exact,
            &StrategySpec::Ig { order: None },
            &EngineSchedule::constant(0.1, 1),
            &vec![0.0].into(),
            0,
            RunOptions::full(),
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert!((trace.steps[0].x_norm - 0.1).abs() < 1e-15);
        assert!((trace.final_x[0] - 0.01).abs() < 1e-15);
        assert_eq!(trace.steps[1].global_step, 2);
        assert_eq!(trace.steps[1].epoch, 1);
    }

    #[test]
    fn decay_schedule() {
        let s = EngineSchedule {
            gamma: 1.0,
            epochs: 10,
            decay_epochs: vec![2, 5],
            decay_factor: 0.1,
            target: None,
            max_steps: None,
        };
        assert_eq!(s.gamma_at(1), 1.0);
        assert_eq!(s.gamma_at(2), 1.0);
        assert!((s.gamma_at(3) - 0.1).abs() < 1e-15);
        assert!((s.gamma_at(6) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn invalid_schedules_rejected() {
        let mut s = EngineSchedule::constant(0.1, 5);
        s.decay_epochs = vec![3, 2];
        assert!(s.validate().is_err());
        s.decay_epochs = vec![6];
        assert!(s.validate().is_err());
        assert!(EngineSchedule::constant(0.0, 5).validate().is_err());
    }

    #[test]
    fn large_step_diverges() {
        let p = signed(4, 1.0);
        let trace = run(
            &p,
            &Oracle::Exact,
            &StrategySpec::Rr,
            &EngineSchedule::constant(3.0, 1000),
            &vec![1.0].into(),
            0,
            RunOptions::summary_only(),
        )
        .unwrap();
        assert!(trace.diverged);
        assert!(trace.steps_to_target.is_none());
    }

    #[test]
    fn max_steps_stops_mid_epoch() {
        let p = signed(10, 1.0);
        let trace = run(
            &p,
            &Oracle::Exact,
            &StrategySpec::Rr,
            &EngineSchedule::constant(0.01, 100).with_max_steps(15),
            &vec![1.0].into(),
            0,
            RunOptions::full(),
        )
        .unwrap();
        assert_eq!(trace.total_steps, 15);
        assert_eq!(trace.steps.len(), 15);
    }
}
