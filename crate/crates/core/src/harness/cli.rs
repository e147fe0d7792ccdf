//! Command-line front end.
//!
//! Worker count precedence: `--workers` flag, then the `PERMGD_WORKERS`
//! environment variable, then the config's `workers` key, then one worker
//! per core.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{run, RunOptions, RunTrace};
use crate::error::{Error, ErrorCategory, Result};
use crate::measures::{check_sample_bias, estimate_heterogeneity, DeviationTable};
use crate::orders::{OrderStrategy, UpdateSequence};
use crate::vector::ParameterVector;

use super::config::{ExperimentConfig, DEFAULT_MAX_STEPS};
use super::demos::{greedy_demo, sameclass_demo, GreedyDemoSetup, SameclassSetup};
use super::output::{epochs_csv, opt, trace_csv, write_atomic};
use super::sweep::{sweep_two_level, SweepSetup};
use super::tune::tune_lr;

pub const WORKERS_ENV: &str = "PERMGD_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "permgd", version, about = "Permutation-based gradient descent laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured strategy for every seed and write traces.
    Run(Common),
    /// Two-level against standard shuffling over a grid of instances.
    Sweep(Common),
    /// Order-quality measures of one update sequence.
    Measure {
        #[command(flatten)]
        common: Common,
        /// File with a 1-based update sequence; defaults to the first
        /// strategy's order at the start point.
        #[arg(long)]
        order: Option<PathBuf>,
    },
    /// Greedy ordering against random reshuffling on the signed example.
    Greedy(Common),
    /// Same-class against standard batching on the classification problem.
    Sameclass(Common),
    /// Step-size grid search for every configured strategy.
    Tune(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    workers: Option<usize>,
}

pub fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Numeric => EXIT_NUMERIC,
        ErrorCategory::Io => EXIT_IO,
    }
}

/// Parses `argv` (program name first), executes and returns the exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let category = e.category();
            eprintln!("error ({}): {e}", category_name(category));
            exit_code(category)
        }
    }
}

fn category_name(c: ErrorCategory) -> &'static str {
    match c {
        ErrorCategory::Config => "config",
        ErrorCategory::Numeric => "numeric",
        ErrorCategory::Io => "io",
    }
}

fn execute(command: Command) -> Result<()> {
    let (common, order) = match &command {
        Command::Run(c) | Command::Sweep(c) | Command::Greedy(c) | Command::Sameclass(c) | Command::Tune(c) => {
            (c, None)
        }
        Command::Measure { common, order } => (common, order.clone()),
    };
    let config = ExperimentConfig::from_path(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|o| o.dir.clone()))
        .ok_or_else(|| Error::config("output", "no output directory: pass --out or set `[output] dir`"))?;
    let workers = resolve_workers(common.workers, std::env::var(WORKERS_ENV).ok().as_deref(), config.workers)?;
    let ctx = Context { config, out };

    let job = || match command {
        Command::Run(_) => cmd_run(&ctx),
        Command::Sweep(_) => cmd_sweep(&ctx),
        Command::Measure { .. } => cmd_measure(&ctx, order.as_deref()),
        Command::Greedy(_) => cmd_greedy(&ctx),
        Command::Sameclass(_) => cmd_sameclass(&ctx),
        Command::Tune(_) => cmd_tune(&ctx),
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Applies flag > environment > config precedence.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>, config: Option<usize>) -> Result<Option<usize>> {
    let n = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(s)) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(WORKERS_ENV, format!("expected a positive integer, got `{s}`")))?,
        ),
        (None, None) => config,
    };
    if n == Some(0) {
        return Err(Error::config("workers", "worker count must be positive"));
    }
    Ok(n)
}

struct Context {
    config: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.out.join(name), contents.as_bytes())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::InvalidArgument(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn strategies(&self) -> Result<Vec<crate::orders::StrategySpec>> {
        let list = self.config.strategy_list();
        if list.is_empty() {
            return Err(Error::config("strategy", "no strategy configured"));
        }
        Ok(list)
    }
}

fn cmd_run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = cfg.problem.build(&cfg.oracle)?;
    let oracle = cfg.oracle.build(&built)?;
    let schedule = cfg.engine.schedule(None)?;
    let x0 = cfg.engine.start_point(&cfg.problem, built.problem.dimension())?;
    let strategies = ctx.strategies()?;
    let options = RunOptions {
        measure_sigma_star: cfg.engine.measure_sigma_star,
        ..RunOptions::full()
    };

    let jobs: Vec<_> = strategies
        .iter()
        .flat_map(|s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    use rayon::prelude::*;
    let traces: Vec<(String, u64, RunTrace)> = jobs
        .par_iter()
        .map(|&(s, seed)| Ok((s.label(), seed, run(&built.problem, &oracle, s, &schedule, &x0, seed, options)?)))
        .collect::<Result<_>>()?;

    let single = traces.len() == 1;
    let mut summary = String::from("strategy,seed,steps_to_target,diverged,total_steps,final_f,final_grad_norm_sq\n");
    for (label, seed, trace) in &traces {
        let suffix = if single { String::new() } else { format!("_{label}_seed{seed}") };
        ctx.write(&format!("trace{suffix}.csv"), &trace_csv(trace))?;
        ctx.write(&format!("epochs{suffix}.csv"), &epochs_csv(trace))?;
        let _ = writeln!(
            summary,
            "{label},{seed},{},{},{},{},{}",
            opt(trace.steps_to_target),
            trace.diverged,
            trace.total_steps,
            trace.final_f,
            trace.final_grad_norm_sq
        );
        println!(
            "run strategy={label} seed={seed} steps={} steps_to_target={} diverged={} final_f={:.6e}",
            trace.total_steps,
            opt(trace.steps_to_target),
            trace.diverged,
            trace.final_f
        );
    }
    ctx.write("summary.csv", &summary)
}

fn cmd_sweep(ctx: &Context) -> Result<()> {
    let setup = SweepSetup::from_config(&ctx.config)?;
    let grid = setup.grid.clone();
    let result = sweep_two_level(&setup)?;
    ctx.write("results.csv", &result.results_csv())?;
    ctx.write("ratio.csv", &result.ratio_csv(grid.k[0], &grid.sigma_top, &grid.m))?;
    if grid.k.len() > 1 {
        for &k in &grid.k {
            ctx.write(&format!("ratio_K{k}.csv"), &result.ratio_csv(k, &grid.sigma_top, &grid.m))?;
        }
    }
    for c in &result.cells {
        println!(
            "sweep sigma_top={} m={} K={} two_level={} standard={} ratio={}",
            c.sigma_top,
            c.m,
            c.k,
            c.two_level.as_ref().map_or("-".into(), |t| format!("{}@{:.3e}", t.median_steps, t.best_lr)),
            c.standard.as_ref().map_or("-".into(), |t| format!("{}@{:.3e}", t.median_steps, t.best_lr)),
            c.ratio.map_or("-".into(), |r| format!("{r:.4}"))
        );
    }
    for &k in &grid.k {
        print!("{}", result.ratio_table(k, &grid.sigma_top, &grid.m));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MeasureSummary {
    order_source: String,
    sigma_star_sq: f64,
    max_deviation_sq: f64,
    sample_bias_max_ratio: f64,
    sample_bias_holds: bool,
    sigma_sq_hat: f64,
    grad_norm_sq: f64,
}

/// Reads a 1-based sequence separated by commas or whitespace.
pub fn read_order_file(path: &Path) -> Result<UpdateSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::config("order", format!("`{s}` is not a positive integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    UpdateSequence::from_one_based(&entries).map_err(|e| Error::config("order", e.to_string()))
}

fn cmd_measure(ctx: &Context, order_path: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let built = cfg.problem.build(&cfg.oracle)?;
    let oracle = cfg.oracle.build(&built)?;
    let problem = built.problem.as_ref();
    let x0 = cfg.engine.start_point(&cfg.problem, problem.dimension())?;
    let (order, source) = match order_path {
        Some(p) => (read_order_file(p)?, p.display().to_string()),
        None => {
            let spec = ctx.strategies()?.remove(0);
            let label = spec.label();
            let mut strategy = OrderStrategy::new(spec)?;
            strategy.check_problem(problem)?;
            let problem = problem.for_epoch(1, cfg.seeds[0]).unwrap_or_else(|| built.problem.clone());
            let order = strategy.next_epoch_order(problem.as_ref(), &oracle, &x0, 1, cfg.seeds[0])?;
            (order, format!("{label} seed {}", cfg.seeds[0]))
        }
    };
    order.check_range(problem.component_count())?;

    let table = DeviationTable::new(problem, &x0);
    let curve = table.phi_curve(&order)?;
    let probes = vec![x0.clone(), ParameterVector::zeros(problem.dimension())];
    let bias = check_sample_bias(problem, &order, std::slice::from_ref(&x0))?;
    let heterogeneity = estimate_heterogeneity(problem, &probes)?;
    let summary = MeasureSummary {
        order_source: source,
        sigma_star_sq: curve.max(),
        max_deviation_sq: table.max_deviation_sq(&order)?,
        sample_bias_max_ratio: bias.max_ratio,
        sample_bias_holds: bias.holds,
        sigma_sq_hat: heterogeneity.sigma_sq_hat,
        grad_norm_sq: table.grad_norm_sq(),
    };

    let mut phi = String::from("k,phi_sq\n");
    for (k, v) in curve.values.iter().enumerate() {
        let _ = writeln!(phi, "{},{v}", k + 1);
    }
    ctx.write("phi.csv", &phi)?;
    ctx.write_json("summary.json", &summary)?;
    println!(
        "measure order=\"{}\" sigma_star_sq={:.6e} sample_bias_max_ratio={:.3e} sigma_sq_hat={:.6e}",
        summary.order_source, summary.sigma_star_sq, summary.sample_bias_max_ratio, summary.sigma_sq_hat
    );
    Ok(())
}

fn cmd_greedy(ctx: &Context) -> Result<()> {
    let setup = GreedyDemoSetup::from_config(&ctx.config)?;
    let (n, sigma) = (setup.n, setup.sigma);
    let report = greedy_demo(&setup)?;
    let mut runs = String::from("seed,greedy_steps_to_target,rr_steps_to_target\n");
    for (i, seed) in report.seeds.iter().enumerate() {
        let _ = writeln!(runs, "{seed},{},{}", opt(report.greedy_steps[i]), opt(report.rr_steps[i]));
    }
    ctx.write("greedy_runs.csv", &runs)?;
    ctx.write_json("greedy.json", &report)?;
    println!(
        "greedy N={n} sigma={sigma} greedy_sigma_star_sq={:.6e} rr_mean_sigma_star_sq={:.6e} lr={:.4e} greedy_median_steps={} rr_median_steps={}",
        report.greedy_sigma_star_sq,
        report.rr_mean_sigma_star_sq,
        report.shared_lr,
        report.greedy_median_steps,
        report.rr_median_steps
    );
    Ok(())
}

fn cmd_sameclass(ctx: &Context) -> Result<()> {
    let setup = SameclassSetup::from_config(&ctx.config)?;
    let report = sameclass_demo(&setup)?;
    let mut rows = String::from("batching,strategy,seed,final_f,final_grad_norm_sq,diverged\n");
    for r in &report.rows {
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{}",
            r.batching, r.strategy, r.seed, r.final_f, r.final_grad_norm_sq, r.diverged
        );
    }
    let mut summary = String::from("batching,strategy,mean_final_f,mean_final_grad_norm_sq\n");
    for s in &report.summary {
        let _ = writeln!(
            summary,
            "{},{},{},{}",
            s.batching, s.strategy, s.mean_final_f, s.mean_final_grad_norm_sq
        );
        println!(
            "sameclass batching={} strategy={} mean_final_f={:.6e} mean_final_grad_norm_sq={:.6e}",
            s.batching, s.strategy, s.mean_final_f, s.mean_final_grad_norm_sq
        );
    }
    ctx.write("sameclass.csv", &rows)?;
    ctx.write("sameclass_summary.csv", &summary)
}

fn cmd_tune(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = cfg.problem.build(&cfg.oracle)?;
    let oracle = cfg.oracle.build(&built)?;
    let mut schedule = cfg.engine.schedule(Some(cfg.engine.gamma.unwrap_or(1.0)))?;
    schedule.max_steps = Some(schedule.max_steps.unwrap_or(DEFAULT_MAX_STEPS));
    let x0 = cfg.engine.start_point(&cfg.problem, built.problem.dimension())?;
    let grid = cfg.lr_grid();
    let mut rows = String::from("strategy,lr,seed,steps_to_target,final_grad_norm_sq,diverged\n");
    let mut best = String::from("strategy,best_lr,median_steps\n");
    for s in ctx.strategies()? {
        let label = s.label();
        let result = tune_lr(&built.problem, &oracle, &s, &schedule, &x0, &grid, &cfg.seeds)?;
        for o in &result.outcomes {
            let _ = writeln!(
                rows,
                "{label},{},{},{},{},{}",
                o.lr,
                o.seed,
                opt(o.steps_to_target),
                o.final_grad_norm_sq,
                o.diverged
            );
        }
        let _ = writeln!(best, "{label},{},{}", result.best_lr, result.median_steps);
        println!("tune strategy={label} best_lr={:.6e} median_steps={}", result.best_lr, result.median_steps);
    }
    ctx.write("tune.csv", &rows)?;
    ctx.write("best_lr.csv", &best)
}
