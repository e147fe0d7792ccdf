use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run, EngineSchedule, RunOptions};
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::orders::StrategySpec;
use crate::problems::SharedProblem;
use crate::vector::ParameterVector;

/// `1.1 · 2^{−j}` for `j = 1..=20`.
pub fn default_lr_grid() -> Vec<f64> {
    (1..=20).map(|j| 1.1 * 2f64.powi(-j)).collect()
}

/// Outcome of one `(lr, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub lr: f64,
    pub seed: u64,
    pub steps_to_target: Option<u64>,
    pub final_grad_norm_sq: f64,
    pub diverged: bool,
}

impl RunOutcome {
    /// Steps as a score; never-reached and diverged runs score `+∞`.
    pub fn score(&self) -> f64 {
        match (self.diverged, self.steps_to_target) {
            (false, Some(s)) => s as f64,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub best_lr: f64,
    pub median_steps: f64,
    /// Every run, grid-major then seed order.
    pub outcomes: Vec<RunOutcome>,
}

/// Median with the upper and lower middle averaged for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub(crate) fn run_outcome(
    problem: &SharedProblem,
    oracle: &Oracle,
    strategy: &StrategySpec,
    schedule: &EngineSchedule,
    x0: &ParameterVector,
    lr: f64,
    seed: u64,
) -> Result<RunOutcome> {
    let schedule = EngineSchedule {
        gamma: lr,
        ..schedule.clone()
    };
    let trace = run(problem, oracle, strategy, &schedule, x0, seed, RunOptions::summary_only())?;
    Ok(RunOutcome {
        lr,
        seed,
        steps_to_target: trace.steps_to_target,
        final_grad_norm_sq: trace.final_grad_norm_sq,
        diverged: trace.diverged,
    })
}

/// Picks the step size with the smallest median steps-to-target over
/// `seeds`; ties go to the smaller step size.
pub fn select_best(lr_grid: &[f64], outcomes: &[RunOutcome]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &lr in lr_grid {
        let scores: Vec<f64> = outcomes.iter().filter(|o| o.lr == lr).map(RunOutcome::score).collect();
        let score = median(&scores);
        let better = match best {
            None => true,
            Some((best_lr, best_score)) => score < best_score || (score == best_score && lr < best_lr),
        };
        if better {
            best = Some((lr, score));
        }
    }
    match best {
        Some((lr, score)) if score.is_finite() => Ok((lr, score)),
        _ => Err(Error::NoAdmissibleStepSize),
    }
}

/// Grid search over step sizes, each scored by the median steps-to-target
/// over all seeds. The schedule's `gamma` is replaced by each grid point.
pub fn tune_lr(
    problem: &SharedProblem,
    oracle: &Oracle,
    strategy: &StrategySpec,
    schedule: &EngineSchedule,
    x0: &ParameterVector,
    lr_grid: &[f64],
    seeds: &[u64],
) -> Result<TuneResult> {
    if lr_grid.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("step-size grid and seed list must be non-empty".into()));
    }
    if schedule.target.is_none() {
        return Err(Error::config("engine", "tuning needs a `target`"));
    }
    let jobs: Vec<(f64, u64)> = lr_grid.iter().flat_map(|&lr| seeds.iter().map(move |&s| (lr, s))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(lr, seed)| run_outcome(problem, oracle, strategy, schedule, x0, lr, seed))
        .collect::<Result<Vec<_>>>()?;
    let (best_lr, median_steps) = select_best(lr_grid, &outcomes)?;
    Ok(TuneResult {
        best_lr,
        median_steps,
        outcomes,
    })
}
