use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run, EngineSchedule, RunOptions};
use crate::error::{Error, Result};
use crate::measures::DeviationTable;
use crate::oracle::{Oracle, Purpose, RngStream};
use crate::orders::{greedy_order, random_permutation, StrategySpec};
use crate::problems::{Batching, Classification, ClassificationSpec, SharedProblem, SignedExample};
use crate::vector::ParameterVector;

use super::config::{ExperimentConfig, ProblemSpec, DEFAULT_MAX_STEPS};
use super::tune::{median, run_outcome, tune_lr};

#[derive(Debug, Clone)]
pub struct GreedyDemoSetup {
    pub n: usize,
    pub sigma: f64,
    pub oracle: Oracle,
    /// Needs a target for the step comparison; `gamma` is tuned.
    pub schedule: EngineSchedule,
    pub x0: ParameterVector,
    pub lr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub rr_samples: usize,
}

impl GreedyDemoSetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let ProblemSpec::SignedExample { n, sigma } = cfg.problem else {
            return Err(Error::config("problem", "greedy needs kind = \"signed_example\""));
        };
        let built = cfg.problem.build(&cfg.oracle)?;
        let mut schedule = cfg.engine.schedule(Some(cfg.engine.gamma.unwrap_or(1.0)))?;
        if schedule.target.is_none() {
            return Err(Error::config("engine", "greedy needs a `target`"));
        }
        schedule.max_steps = Some(schedule.max_steps.unwrap_or(DEFAULT_MAX_STEPS));
        Ok(Self {
            n,
            sigma,
            oracle: cfg.oracle.build(&built)?,
            schedule,
            x0: cfg.engine.start_point(&cfg.problem, 1)?,
            lr_grid: cfg.lr_grid(),
            seeds: cfg.seeds.clone(),
            rr_samples: cfg.demo().rr_samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyReport {
    pub n: usize,
    pub sigma: f64,
    pub greedy_sigma_star_sq: f64,
    pub rr_mean_sigma_star_sq: f64,
    /// `Nσ²/256`.
    pub rr_lower_bound: f64,
    pub rr_samples: usize,
    /// Step size tuned on reshuffling and shared by both strategies.
    pub shared_lr: f64,
    pub seeds: Vec<u64>,
    pub greedy_steps: Vec<Option<u64>>,
    pub rr_steps: Vec<Option<u64>>,
    pub greedy_median_steps: f64,
    pub rr_median_steps: f64,
}

fn steps_score(steps: &[Option<u64>]) -> f64 {
    let scores: Vec<f64> = steps.iter().map(|s| s.map_or(f64::INFINITY, |v| v as f64)).collect();
    median(&scores)
}

/// Greedy ordering against random reshuffling on the signed example:
/// order quality at `x0` and paired steps-to-target.
pub fn greedy_demo(setup: &GreedyDemoSetup) -> Result<GreedyReport> {
    let signed = SignedExample::new(setup.n, setup.sigma)?;
    let table = DeviationTable::new(&signed, &setup.x0);
    let problem: SharedProblem = Arc::new(signed);

    let greedy_seq = greedy_order(
        problem.as_ref(),
        &Oracle::Exact,
        &setup.x0,
        RngStream::new(0, Purpose::GreedyProbe),
    )?;
    let greedy_sigma_star_sq = table.sigma_star_sq(&greedy_seq)?;

    let samples: Vec<f64> = (0..setup.rr_samples as u64)
        .into_par_iter()
        .map(|s| {
            let seq = random_permutation(setup.n, RngStream::new(0, Purpose::Probe).at(s, 0));
            table.sigma_star_sq(&seq)
        })
        .collect::<Result<_>>()?;
    let rr_mean_sigma_star_sq = if samples.is_empty() {
        f64::NAN
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    };

    let rr = StrategySpec::Rr;
    let greedy = StrategySpec::Greedy { update_every: 1 };
    let tuned = tune_lr(&problem, &setup.oracle, &rr, &setup.schedule, &setup.x0, &setup.lr_grid, &setup.seeds)?;
    let shared_lr = tuned.best_lr;

    let mut greedy_steps = Vec::new();
    let mut rr_steps = Vec::new();
    let paired: Vec<(Option<u64>, Option<u64>)> = setup
        .seeds
        .par_iter()
        .map(|&seed| {
            let g = run_outcome(&problem, &setup.oracle, &greedy, &setup.schedule, &setup.x0, shared_lr, seed)?;
            let r = run_outcome(&problem, &setup.oracle, &rr, &setup.schedule, &setup.x0, shared_lr, seed)?;
            let keep = |o: &super::tune::RunOutcome| if o.diverged { None } else { o.steps_to_target };
            Ok((keep(&g), keep(&r)))
        })
        .collect::<Result<_>>()?;
    for (g, r) in paired {
        greedy_steps.push(g);
        rr_steps.push(r);
    }

    Ok(GreedyReport {
        n: setup.n,
        sigma: setup.sigma,
        greedy_sigma_star_sq,
        rr_mean_sigma_star_sq,
        rr_lower_bound: setup.n as f64 * setup.sigma * setup.sigma / 256.0,
        rr_samples: setup.rr_samples,
        shared_lr,
        seeds: setup.seeds.clone(),
        greedy_median_steps: steps_score(&greedy_steps),
        rr_median_steps: steps_score(&rr_steps),
        greedy_steps,
        rr_steps,
    })
}

#[derive(Debug, Clone)]
pub struct SameclassSetup {
    /// Its `batching` field is ignored; both variants are run.
    pub spec: ClassificationSpec,
    pub strategies: Vec<StrategySpec>,
    pub schedule: EngineSchedule,
    pub x0: Option<ParameterVector>,
    pub seeds: Vec<u64>,
}

impl SameclassSetup {
    /// Setup described by a config with a `sameclass_classification`
    /// problem; without configured strategies the defaults are used.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg
            .problem
            .classification_spec()
            .ok_or_else(|| Error::config("problem", "sameclass needs kind = \"sameclass_classification\""))?;
        let built = cfg.problem.build(&cfg.oracle)?;
        let strategies = match cfg.strategy_list() {
            l if l.is_empty() => Self::default_strategies(),
            l => l,
        };
        Ok(Self {
            spec,
            strategies,
            schedule: cfg.engine.schedule(None)?,
            x0: Some(cfg.engine.start_point(&cfg.problem, built.problem.dimension())?),
            seeds: cfg.seeds.clone(),
        })
    }

    pub fn default_strategies() -> Vec<StrategySpec> {
        vec![
            StrategySpec::Rr,
            StrategySpec::Greedy { update_every: 1 },
            StrategySpec::Greedy { update_every: 10 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SameclassRow {
    pub batching: String,
    pub strategy: String,
    pub seed: u64,
    pub final_f: f64,
    pub final_grad_norm_sq: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SameclassSummary {
    pub batching: String,
    pub strategy: String,
    pub mean_final_f: f64,
    pub mean_final_grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SameclassReport {
    pub rows: Vec<SameclassRow>,
    pub summary: Vec<SameclassSummary>,
}

impl SameclassReport {
    pub fn mean_final_f(&self, batching: &str, strategy: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.batching == batching && s.strategy == strategy)
            .map(|s| s.mean_final_f)
    }
}

pub const SAME_CLASS: &str = "same_class";
pub const STANDARD: &str = "standard";

/// Strategies on the classification problem under same-class and standard
/// batching, averaged over seeds.
pub fn sameclass_demo(setup: &SameclassSetup) -> Result<SameclassReport> {
    let variants = [
        (SAME_CLASS, Batching::SameClass),
        (STANDARD, Batching::Standard { redraw_each_epoch: true }),
    ];
    let mut problems = Vec::new();
    for (name, batching) in variants {
        let spec = ClassificationSpec {
            batching,
            ..setup.spec.clone()
        };
        let problem: SharedProblem = Arc::new(Classification::new(spec)?);
        problems.push((name, problem));
    }
    for s in &setup.strategies {
        s.validate()?;
    }

    let mut jobs = Vec::new();
    for (name, problem) in &problems {
        for strategy in &setup.strategies {
            for &seed in &setup.seeds {
                jobs.push((*name, problem, strategy, seed));
            }
        }
    }
    let rows: Vec<SameclassRow> = jobs
        .par_iter()
        .map(|&(name, problem, strategy, seed)| {
            let x0 = setup
                .x0
                .clone()
                .unwrap_or_else(|| ParameterVector::zeros(problem.dimension()));
            let trace = run(problem, &Oracle::Exact, strategy, &setup.schedule, &x0, seed, RunOptions::summary_only())?;
            Ok(SameclassRow {
                batching: name.to_string(),
                strategy: strategy.label(),
                seed,
                final_f: trace.final_f,
                final_grad_norm_sq: trace.final_grad_norm_sq,
                diverged: trace.diverged,
            })
        })
        .collect::<Result<_>>()?;

    let mut summary = Vec::new();
    for (name, _) in &problems {
        for strategy in &setup.strategies {
            let label = strategy.label();
            let sel: Vec<&SameclassRow> = rows.iter().filter(|r| r.batching == *name && r.strategy == label).collect();
            let count = sel.len().max(1) as f64;
            summary.push(SameclassSummary {
                batching: name.to_string(),
                strategy: label,
                mean_final_f: sel.iter().map(|r| r.final_f).sum::<f64>() / count,
                mean_final_grad_norm_sq: sel.iter().map(|r| r.final_grad_norm_sq).sum::<f64>() / count,
            });
        }
    }
    Ok(SameclassReport { rows, summary })
}
