//! Declarative experiment configuration (TOML).
//!
//! ```toml
//! seeds = [1, 2, 3]
//!
//! [problem]
//! kind = "band_quadratic"
//! d = 20
//! lambda = 0.2
//! sigma_top = 100.0
//! sigma_low = 10.0
//! m = 16
//!
//! [strategy]
//! kind = "two_level_k"
//! K = 1
//!
//! [engine]
//! gamma = 0.001
//! epochs = 1000
//! target = { metric = "param_norm", threshold = 0.2 }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineSchedule, Target};
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::orders::StrategySpec;
use crate::problems::{
    Batching, Classification, ClassificationSpec, Flattened, SharedProblem, SignedExample, TopLevel,
    TwoLevel, TwoLevelQuadratic,
};
use crate::vector::ParameterVector;

use super::tune::default_lr_grid;

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
pub const DEFAULT_SIGMA_LOW: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub lr_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub workers: Option<usize>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub strategy: Option<StrategySpec>,
    #[serde(default)]
    pub strategies: Option<Vec<StrategySpec>>,
    pub engine: EngineSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub demo: Option<DemoSpec>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    SignedExample {
        #[serde(rename = "N")]
        n: usize,
        sigma: f64,
    },
    BandQuadratic {
        d: usize,
        lambda: f64,
        #[serde(default)]
        sigma_top: f64,
        #[serde(default = "default_sigma_low")]
        sigma_low: f64,
        m: usize,
    },
    SameclassClassification {
        classes: usize,
        per_class: usize,
        dim: usize,
        batch_size: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        batching: BatchingKind,
        #[serde(default = "default_true")]
        redraw_each_epoch: bool,
    },
}

fn default_sigma_low() -> f64 {
    DEFAULT_SIGMA_LOW
}

fn default_separation() -> f64 {
    ClassificationSpec::default().separation
}

fn default_l2() -> f64 {
    ClassificationSpec::default().l2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchingKind {
    #[default]
    SameClass,
    Standard,
}

/// A built problem: the finite sum the engine iterates over, plus the
/// two-level structure when there is one.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub problem: SharedProblem,
    pub two_level: Option<Arc<dyn TwoLevel>>,
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::SignedExample { .. } => "signed_example",
            ProblemSpec::BandQuadratic { .. } => "band_quadratic",
            ProblemSpec::SameclassClassification { .. } => "sameclass_classification",
        }
    }

    pub fn classification_spec(&self) -> Option<ClassificationSpec> {
        match *self {
            ProblemSpec::SameclassClassification {
                classes,
                per_class,
                dim,
                batch_size,
                seed,
                separation,
                l2,
                batching,
                redraw_each_epoch,
            } => Some(ClassificationSpec {
                classes,
                per_class,
                dim,
                batch_size,
                seed,
                separation,
                l2,
                batching: match batching {
                    BatchingKind::SameClass => Batching::SameClass,
                    BatchingKind::Standard => Batching::Standard { redraw_each_epoch },
                },
            }),
            _ => None,
        }
    }

    /// Builds the problem. Two-level problems are flattened, except under the
    /// internal-SGD oracle where the engine iterates over top-level functions.
    pub fn build(&self, oracle: &OracleSpec) -> Result<BuiltProblem> {
        let wrap = |e: Error| match e {
            Error::InvalidArgument(msg) => Error::config("problem", msg),
            other => other,
        };
        match self {
            ProblemSpec::SignedExample { n, sigma } => {
                if oracle.mode == OracleMode::InternalSgd {
                    return Err(Error::config("oracle", "mode `internal_sgd` needs a two-level problem"));
                }
                Ok(BuiltProblem {
                    problem: Arc::new(SignedExample::new(*n, *sigma).map_err(wrap)?),
                    two_level: None,
                })
            }
            ProblemSpec::BandQuadratic {
                d,
                lambda,
                sigma_top,
                sigma_low,
                m,
            } => {
                let tl: Arc<dyn TwoLevel> =
                    Arc::new(TwoLevelQuadratic::band(*d, *lambda, *sigma_top, *sigma_low, *m).map_err(wrap)?);
                let problem: SharedProblem = if oracle.mode == OracleMode::InternalSgd {
                    Arc::new(TopLevel(Arc::clone(&tl)))
                } else {
                    Arc::new(Flattened(Arc::clone(&tl)))
                };
                Ok(BuiltProblem {
                    problem,
                    two_level: Some(tl),
                })
            }
            ProblemSpec::SameclassClassification { .. } => {
                if oracle.mode == OracleMode::InternalSgd {
                    return Err(Error::config("oracle", "mode `internal_sgd` needs a two-level problem"));
                }
                let spec = self.classification_spec().expect("classification variant");
                Ok(BuiltProblem {
                    problem: Arc::new(Classification::new(spec).map_err(wrap)?),
                    two_level: None,
                })
            }
        }
    }

    /// Start point used when the config does not give one.
    pub fn default_start_point(&self, dim: usize) -> ParameterVector {
        match self {
            ProblemSpec::SignedExample { .. } => ParameterVector::filled(dim, 1.0),
            ProblemSpec::BandQuadratic { .. } => ParameterVector::standard_normal(dim, 0),
            ProblemSpec::SameclassClassification { .. } => ParameterVector::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Exact,
    Gaussian,
    InternalSgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default)]
    pub mode: OracleMode,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default, rename = "P")]
    pub p: f64,
}

impl OracleSpec {
    pub fn build(&self, built: &BuiltProblem) -> Result<Oracle> {
        match self.mode {
            OracleMode::Exact => {
                if self.zeta != 0.0 || self.p != 0.0 {
                    return Err(Error::config("oracle", "keys `zeta`/`P` need mode = \"gaussian\""));
                }
                Ok(Oracle::Exact)
            }
            OracleMode::Gaussian => {
                Oracle::gaussian(self.zeta, self.p).map_err(|e| Error::config("oracle", e.to_string()))
            }
            OracleMode::InternalSgd => {
                if self.zeta != 0.0 || self.p != 0.0 {
                    return Err(Error::config("oracle", "keys `zeta`/`P` need mode = \"gaussian\""));
                }
                let tl = built
                    .two_level
                    .clone()
                    .ok_or_else(|| Error::config("oracle", "mode `internal_sgd` needs a two-level problem"))?;
                Ok(Oracle::InternalSgd(tl))
            }
        }
    }
}

/// Start point: a fill value, an explicit vector, or a standard normal
/// vector drawn from `random_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartPoint {
    Fill(f64),
    Vector(Vec<f64>),
    Random { random_seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    #[serde(default)]
    pub gamma: Option<f64>,
    pub epochs: u64,
    #[serde(default)]
    pub decay_epochs: Vec<u64>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default)]
    pub target: Option<Target>,
    #[serde(default)]
    pub x0: Option<StartPoint>,
    #[serde(default)]
    pub measure_sigma_star: bool,
    #[serde(default)]
    pub max_steps: Option<u64>,
}

fn default_decay_factor() -> f64 {
    1.0
}

impl EngineSpec {
    /// Schedule with the given step size (or the configured one).
    pub fn schedule(&self, gamma: Option<f64>) -> Result<EngineSchedule> {
        let gamma = gamma
            .or(self.gamma)
            .ok_or_else(|| Error::config("engine", "missing key `gamma`"))?;
        let schedule = EngineSchedule {
            gamma,
            epochs: self.epochs,
            decay_epochs: self.decay_epochs.clone(),
            decay_factor: self.decay_factor,
            target: self.target,
            max_steps: self.max_steps,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn start_point(&self, problem: &ProblemSpec, dim: usize) -> Result<ParameterVector> {
        let x0 = match &self.x0 {
            None => problem.default_start_point(dim),
            Some(StartPoint::Random { random_seed }) => ParameterVector::standard_normal(dim, *random_seed),
            Some(StartPoint::Fill(v)) => ParameterVector::filled(dim, *v),
            Some(StartPoint::Vector(v)) if v.len() == dim => ParameterVector::from(v.clone()),
            Some(StartPoint::Vector(v)) => {
                return Err(Error::config(
                    "engine",
                    format!("key `x0` has {} entries but the problem has dimension {dim}", v.len()),
                ))
            }
        };
        if !x0.is_finite() {
            return Err(Error::config("engine", "key `x0` must be finite"));
        }
        Ok(x0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sigma_top_grid")]
    pub sigma_top: Vec<f64>,
    #[serde(default = "default_m_grid")]
    pub m: Vec<usize>,
    #[serde(default = "default_k_values", rename = "K")]
    pub k: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            sigma_top: default_sigma_top_grid(),
            m: default_m_grid(),
            k: default_k_values(),
        }
    }
}

fn default_sigma_top_grid() -> Vec<f64> {
    vec![0.0, 1.0, 10.0, 100.0]
}

fn default_m_grid() -> Vec<usize> {
    vec![4, 8, 16, 64]
}

fn default_k_values() -> Vec<usize> {
    vec![1]
}

/// Knobs of the demonstration subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSpec {
    /// Random permutations averaged for the reshuffling `σ⋆²` estimate.
    #[serde(default = "default_rr_samples")]
    pub rr_samples: usize,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            rr_samples: default_rr_samples(),
        }
    }
}

fn default_rr_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let section = path.split('.').next().unwrap_or("<root>").to_string();
            let section = if section == "." { "<root>".to_string() } else { section };
            Error::config(section, format!("at `{path}`: {}", e.inner().message().trim()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("<root>", "key `seeds` must not be empty"));
        }
        if let Some(grid) = &self.lr_grid {
            if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(Error::config("<root>", "key `lr_grid` must hold positive finite step sizes"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("<root>", "key `workers` must be positive"));
        }
        if self.strategy.is_some() && self.strategies.is_some() {
            return Err(Error::config("strategy", "give either `strategy` or `strategies`, not both"));
        }
        for s in self.strategy_list() {
            s.validate()?;
        }
        let built = self.problem.build(&self.oracle)?;
        self.oracle.build(&built)?;
        for s in self.strategy_list() {
            crate::orders::OrderStrategy::new(s.clone())?.check_problem(built.problem.as_ref())?;
        }
        self.engine.start_point(&self.problem, built.problem.dimension())?;
        if let Some(gamma) = self.engine.gamma {
            self.engine.schedule(Some(gamma))?;
        } else {
            self.engine.schedule(Some(1.0))?;
        }
        if let Some(sweep) = &self.sweep {
            if !matches!(self.problem, ProblemSpec::BandQuadratic { .. }) {
                return Err(Error::config("sweep", "sweeps need a band_quadratic problem"));
            }
            if sweep.sigma_top.is_empty() || sweep.m.is_empty() || sweep.k.is_empty() {
                return Err(Error::config("sweep", "grids must not be empty"));
            }
            for &m in &sweep.m {
                if m == 0 || m % 2 != 0 {
                    return Err(Error::config("sweep", format!("key `m` entries must be even, got {m}")));
                }
                for &k in &sweep.k {
                    if k == 0 || m % k != 0 {
                        return Err(Error::config("sweep", format!("key `K` = {k} does not divide m = {m}")));
                    }
                }
            }
            if sweep.sigma_top.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(Error::config("sweep", "key `sigma_top` entries must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// The configured strategies, single or list.
    pub fn strategy_list(&self) -> Vec<StrategySpec> {
        match (&self.strategy, &self.strategies) {
            (Some(s), _) => vec![s.clone()],
            (None, Some(list)) => list.clone(),
            (None, None) => Vec::new(),
        }
    }

    pub fn lr_grid(&self) -> Vec<f64> {
        self.lr_grid.clone().unwrap_or_else(default_lr_grid)
    }

    pub fn demo(&self) -> DemoSpec {
        self.demo.clone().unwrap_or_default()
    }
}
