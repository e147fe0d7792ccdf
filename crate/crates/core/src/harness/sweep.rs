use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::EngineSchedule;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::orders::StrategySpec;
use crate::problems::{Flattened, SharedProblem, TwoLevel, TwoLevelQuadratic};
use crate::vector::ParameterVector;

use super::config::{ExperimentConfig, ProblemSpec, SweepSpec, DEFAULT_MAX_STEPS};
use super::output::opt;
use super::tune::{run_outcome, select_best, RunOutcome};

/// Everything a two-level sweep needs besides the grids.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub d: usize,
    pub lambda: f64,
    pub sigma_low: f64,
    pub grid: SweepSpec,
    /// `gamma` is replaced by each grid point.
    pub schedule: EngineSchedule,
    pub x0: ParameterVector,
    pub lr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSetup {
    /// Setup described by a config with a `band_quadratic` problem. The
    /// problem's own `sigma_top` and `m` are replaced by the sweep grids.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let ProblemSpec::BandQuadratic { d, lambda, sigma_low, .. } = cfg.problem else {
            return Err(Error::config("problem", "sweep needs kind = \"band_quadratic\""));
        };
        let mut schedule = cfg.engine.schedule(Some(cfg.engine.gamma.unwrap_or(1.0)))?;
        if schedule.target.is_none() {
            return Err(Error::config("engine", "sweep needs a `target`"));
        }
        schedule.max_steps = Some(schedule.max_steps.unwrap_or(DEFAULT_MAX_STEPS));
        Ok(Self {
            d,
            lambda,
            sigma_low,
            grid: cfg.sweep.clone().unwrap_or_default(),
            schedule,
            x0: cfg.engine.start_point(&cfg.problem, d)?,
            lr_grid: cfg.lr_grid(),
            seeds: cfg.seeds.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma_top: f64,
    pub m: usize,
    pub k: Option<usize>,
    pub strategy: String,
    pub lr: f64,
    pub seed: u64,
    pub steps_to_target: Option<u64>,
    pub final_grad_norm_sq: f64,
    pub diverged: bool,
}

/// Tuned result of one strategy in one `(σ_top, m)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TunedCell {
    pub best_lr: f64,
    pub median_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub sigma_top: f64,
    pub m: usize,
    pub k: usize,
    pub two_level: Option<TunedCell>,
    pub standard: Option<TunedCell>,
    /// Median two-level steps over median standard steps, each at its own
    /// tuned step size.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellSummary>,
}

struct Job {
    cell: usize,
    strategy: StrategySpec,
    lr: f64,
    seed: u64,
}

/// Compares two-level K-shuffling against standard shuffling over a grid of
/// `(σ_top, m)` band-quadratic instances, tuning the step size separately
/// for each strategy and cell.
pub fn sweep_two_level(setup: &SweepSetup) -> Result<SweepResult> {
    let mut cells: Vec<(f64, usize, SharedProblem)> = Vec::new();
    for &sigma_top in &setup.grid.sigma_top {
        for &m in &setup.grid.m {
            let tl: Arc<dyn TwoLevel> =
                Arc::new(TwoLevelQuadratic::band(setup.d, setup.lambda, sigma_top, setup.sigma_low, m)?);
            cells.push((sigma_top, m, Arc::new(Flattened(tl))));
        }
    }
    let strategies: Vec<StrategySpec> = setup
        .grid
        .k
        .iter()
        .map(|&k| StrategySpec::TwoLevelK { k })
        .chain(std::iter::once(StrategySpec::StandardCombined))
        .collect();

    let mut jobs = Vec::new();
    for cell in 0..cells.len() {
        for strategy in &strategies {
            for &lr in &setup.lr_grid {
                for &seed in &setup.seeds {
                    jobs.push(Job {
                        cell,
                        strategy: strategy.clone(),
                        lr,
                        seed,
                    });
                }
            }
        }
    }

    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|job| {
            let (sigma_top, m, problem) = &cells[job.cell];
            let outcome = run_outcome(
                problem,
                &Oracle::Exact,
                &job.strategy,
                &setup.schedule,
                &setup.x0,
                job.lr,
                job.seed,
            )
            .unwrap_or_else(|e| {
                eprintln!(
                    "warning: sigma_top={sigma_top} m={m} {} lr={} seed={}: {e}",
                    job.strategy.label(),
                    job.lr,
                    job.seed
                );
                RunOutcome {
                    lr: job.lr,
                    seed: job.seed,
                    steps_to_target: None,
                    final_grad_norm_sq: f64::NAN,
                    diverged: true,
                }
            });
            SweepRow {
                sigma_top: *sigma_top,
                m: *m,
                k: match job.strategy {
                    StrategySpec::TwoLevelK { k } => Some(k),
                    _ => None,
                },
                strategy: job.strategy.kind().to_string(),
                lr: job.lr,
                seed: job.seed,
                steps_to_target: outcome.steps_to_target,
                final_grad_norm_sq: outcome.final_grad_norm_sq,
                diverged: outcome.diverged,
            }
        })
        .collect();

    let tuned = |sigma_top: f64, m: usize, strategy: &StrategySpec| -> Option<TunedCell> {
        let outcomes: Vec<RunOutcome> = rows
            .iter()
            .filter(|r| {
                r.sigma_top == sigma_top
                    && r.m == m
                    && r.strategy == strategy.kind()
                    && r.k
                        == match strategy {
                            StrategySpec::TwoLevelK { k } => Some(*k),
                            _ => None,
                        }
            })
            .map(|r| RunOutcome {
                lr: r.lr,
                seed: r.seed,
                steps_to_target: r.steps_to_target,
                final_grad_norm_sq: r.final_grad_norm_sq,
                diverged: r.diverged,
            })
            .collect();
        select_best(&setup.lr_grid, &outcomes)
            .ok()
            .map(|(best_lr, median_steps)| TunedCell { best_lr, median_steps })
    };

    let mut summaries = Vec::new();
    for (sigma_top, m, _) in &cells {
        let standard = tuned(*sigma_top, *m, &StrategySpec::StandardCombined);
        for &k in &setup.grid.k {
            let two_level = tuned(*sigma_top, *m, &StrategySpec::TwoLevelK { k });
            let ratio = match (&two_level, &standard) {
                (Some(a), Some(b)) => Some(a.median_steps / b.median_steps),
                _ => None,
            };
            summaries.push(CellSummary {
                sigma_top: *sigma_top,
                m: *m,
                k,
                two_level,
                standard: standard.clone(),
                ratio,
            });
        }
    }
    Ok(SweepResult { rows, cells: summaries })
}

impl SweepResult {
    pub fn results_csv(&self) -> String {
        let mut out =
            String::from("sigma_top,m,K,strategy,lr,seed,steps_to_target,final_grad_norm_sq,diverged\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.sigma_top,
                r.m,
                opt(r.k),
                r.strategy,
                r.lr,
                r.seed,
                opt(r.steps_to_target),
                r.final_grad_norm_sq,
                r.diverged
            );
        }
        out
    }

    /// Ratio matrix for one `K`: header of `m` values, one row per `σ_top`.
    pub fn ratio_csv(&self, k: usize, sigma_tops: &[f64], ms: &[usize]) -> String {
        let mut out = String::from("sigma_top");
        for m in ms {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for &s in sigma_tops {
            let _ = write!(out, "{s}");
            for &m in ms {
                let _ = write!(out, ",{}", opt(self.ratio(s, m, k)));
            }
            out.push('\n');
        }
        out
    }

    pub fn ratio(&self, sigma_top: f64, m: usize, k: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.sigma_top == sigma_top && c.m == m && c.k == k)
            .and_then(|c| c.ratio)
    }

    /// Plain-text rendering of the ratio matrix.
    pub fn ratio_table(&self, k: usize, sigma_tops: &[f64], ms: &[usize]) -> String {
        let mut out = format!("two-level (K={k}) / standard steps ratio\n{:>10}", "sigma_top");
        for m in ms {
            let _ = write!(out, "{:>10}", format!("m={m}"));
        }
        out.push('\n');
        for &s in sigma_tops {
            let _ = write!(out, "{s:>10}");
            for &m in ms {
                match self.ratio(s, m, k) {
                    Some(r) => {
                        let _ = write!(out, "{r:>10.3}");
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
