//! Python bindings for the `permgd` laboratory.
//!
//! Sequences are 0-based Python lists; parameter vectors are lists of floats.

use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use permgd::engine::{run as run_engine, EngineSchedule, RunOptions, TargetMetric};
use permgd::measures::{self, BoundInputs};
use permgd::oracle::{Oracle, Purpose, RngStream};
use permgd::orders::{self, StrategySpec, UpdateSequence};
use permgd::problems::{
    Batching, Classification, ClassificationSpec, Flattened, SharedProblem, SignedExample, TwoLevel,
    TwoLevelQuadratic,
};
use permgd::{Error, ErrorCategory, ParameterVector};

fn to_py(e: Error) -> PyErr {
    match e.category() {
        ErrorCategory::Config => PyValueError::new_err(e.to_string()),
        ErrorCategory::Numeric => PyArithmeticError::new_err(e.to_string()),
        ErrorCategory::Io => PyOSError::new_err(e.to_string()),
    }
}

/// A finite-sum problem.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: SharedProblem,
    kind: &'static str,
}

impl PyProblem {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dimension() {
            return Err(PyValueError::new_err(format!(
                "expected a vector of length {}, got {}",
                self.inner.dimension(),
                x.len()
            )));
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> PyResult<()> {
        if i >= self.inner.component_count() {
            return Err(PyValueError::new_err(format!(
                "component {i} out of range for {} components",
                self.inner.component_count()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl PyProblem {
    /// Signed one-dimensional example with `n` components `½x² ± σx`.
    #[staticmethod]
    fn signed_example(n: usize, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(SignedExample::new(n, sigma).map_err(to_py)?),
            kind: "signed_example",
        })
    }

    /// Band-diagonal two-level quadratic, flattened to `2·m` components.
    #[staticmethod]
    #[pyo3(signature = (d, lam, sigma_top, sigma_low, m))]
    fn band_quadratic(d: usize, lam: f64, sigma_top: f64, sigma_low: f64, m: usize) -> PyResult<Self> {
        let tl: Arc<dyn TwoLevel> =
            Arc::new(TwoLevelQuadratic::band(d, lam, sigma_top, sigma_low, m).map_err(to_py)?);
        Ok(Self {
            inner: Arc::new(Flattened(tl)),
            kind: "band_quadratic",
        })
    }

    /// Softmax regression on Gaussian blobs with same-class or standard batches.
    #[staticmethod]
    #[pyo3(signature = (classes, per_class, dim, batch_size, seed=0, separation=3.0, l2=0.01, same_class=true))]
    #[allow(clippy::too_many_arguments)]
    fn classification(
        classes: usize,
        per_class: usize,
        dim: usize,
        batch_size: usize,
        seed: u64,
        separation: f64,
        l2: f64,
        same_class: bool,
    ) -> PyResult<Self> {
        let spec = ClassificationSpec {
            classes,
            per_class,
            dim,
            batch_size,
            seed,
            separation,
            l2,
            batching: if same_class {
                Batching::SameClass
            } else {
                Batching::Standard { redraw_each_epoch: true }
            },
        };
        Ok(Self {
            inner: Arc::new(Classification::new(spec).map_err(to_py)?),
            kind: "sameclass_classification",
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.kind
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn component_count(&self) -> usize {
        self.inner.component_count()
    }

    #[getter]
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.inner.value(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        let mut out = vec![0.0; x.len()];
        self.inner.gradient(&x, &mut out);
        Ok(out)
    }

    fn component_gradient(&self, i: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        self.check_index(i)?;
        let mut out = vec![0.0; x.len()];
        self.inner.component_gradient(i, &x, &mut out);
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(kind={}, dimension={}, components={})",
            self.kind,
            self.inner.dimension(),
            self.inner.component_count()
        )
    }
}

fn sequence(problem: &PyProblem, order: Vec<usize>) -> PyResult<UpdateSequence> {
    let seq = UpdateSequence::new(order);
    seq.check_range(problem.inner.component_count()).map_err(to_py)?;
    Ok(seq)
}

/// Greedy order at `x` from exact component gradients.
#[pyfunction]
fn greedy_order(problem: &PyProblem, x: Vec<f64>) -> PyResult<Vec<usize>> {
    problem.check_dim(&x)?;
    let seq = orders::greedy_order(
        problem.inner.as_ref(),
        &Oracle::Exact,
        &x,
        RngStream::new(0, Purpose::GreedyProbe),
    )
    .map_err(to_py)?;
    Ok(seq.entries().to_vec())
}

/// Two-level K-shuffle of `n` top-level and `m` low-level components.
/// Flattened index of pair `(i, j)` is `i·m + j`.
#[pyfunction]
#[pyo3(signature = (n, m, k, seed=0, epoch=1))]
fn two_level_k_shuffle(n: usize, m: usize, k: usize, seed: u64, epoch: u64) -> PyResult<Vec<usize>> {
    let stream = RngStream::new(seed, Purpose::Order).at(epoch, 0);
    let seq = orders::two_level_k_shuffle(n, m, k, stream).map_err(to_py)?;
    Ok(seq.entries().to_vec())
}

/// Uniform random permutation of `0..n`.
#[pyfunction]
#[pyo3(signature = (n, seed=0, epoch=1))]
fn random_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    orders::random_permutation(n, RngStream::new(seed, Purpose::Order).at(epoch, 0))
        .entries()
        .to_vec()
}

/// `φ²_k` for `k = 1..n`.
#[pyfunction]
fn phi_curve(problem: &PyProblem, order: Vec<usize>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    problem.check_dim(&x)?;
    let seq = sequence(problem, order)?;
    Ok(measures::phi_curve(problem.inner.as_ref(), &seq, &x).map_err(to_py)?.values)
}

/// Empirical `σ⋆²` of an order at `x`.
#[pyfunction]
fn sigma_star(problem: &PyProblem, order: Vec<usize>, x: Vec<f64>) -> PyResult<f64> {
    problem.check_dim(&x)?;
    let seq = sequence(problem, order)?;
    measures::sigma_star_empirical(problem.inner.as_ref(), &seq, &x).map_err(to_py)
}

/// Largest sample-bias ratio over the probe points; at most 1 when the
/// condition holds.
#[pyfunction]
fn sample_bias_ratio(problem: &PyProblem, order: Vec<usize>, probes: Vec<Vec<f64>>) -> PyResult<f64> {
    for p in &probes {
        problem.check_dim(p)?;
    }
    let seq = sequence(problem, order)?;
    let probes: Vec<ParameterVector> = probes.into_iter().map(ParameterVector::from).collect();
    Ok(measures::check_sample_bias(problem.inner.as_ref(), &seq, &probes)
        .map_err(to_py)?
        .max_ratio)
}

/// Upper bound on the mean squared gradient norm over `t` epochs.
#[pyfunction]
#[pyo3(signature = (f0, l, n, t, gamma, sigma_star_sq, zeta=0.0, p=0.0, m_star=0.0))]
#[allow(clippy::too_many_arguments)]
fn convergence_bound(
    f0: f64,
    l: f64,
    n: f64,
    t: f64,
    gamma: f64,
    sigma_star_sq: f64,
    zeta: f64,
    p: f64,
    m_star: f64,
) -> PyResult<f64> {
    measures::convergence_bound(&BoundInputs {
        f0,
        l,
        n,
        t,
        gamma,
        zeta,
        p,
        m_star,
        sigma_star_sq,
    })
    .map_err(to_py)
}

fn strategy_spec(kind: &str, k: Option<usize>, update_every: Option<usize>, order: Option<Vec<usize>>) -> PyResult<StrategySpec> {
    let mut value = serde_json::json!({ "kind": kind });
    if let Some(k) = k {
        value["K"] = k.into();
    }
    if let Some(e) = update_every {
        value["update_every"] = e.into();
    }
    if let Some(o) = order {
        value["order"] = o.into_iter().map(|i| i + 1).collect::<Vec<_>>().into();
    }
    let spec: StrategySpec = serde_json::from_value(value).map_err(|e| PyValueError::new_err(format!("strategy: {e}")))?;
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

fn oracle(zeta: f64, p: f64) -> PyResult<Oracle> {
    Oracle::gaussian(zeta, p).map_err(to_py)
}

fn metric(name: &str) -> PyResult<TargetMetric> {
    match name {
        "param_norm" => Ok(TargetMetric::ParamNorm),
        "grad_norm_sq" => Ok(TargetMetric::GradNormSq),
        "f_gap" => Ok(TargetMetric::FGap),
        other => Err(PyValueError::new_err(format!("unknown target metric `{other}`"))),
    }
}

fn schedule(gamma: f64, epochs: u64, target: Option<f64>, metric_name: &str, max_steps: Option<u64>) -> PyResult<EngineSchedule> {
    let mut s = EngineSchedule::constant(gamma, epochs);
    if let Some(t) = target {
        s = s.with_target(metric(metric_name)?, t);
    }
    s.max_steps = max_steps;
    Ok(s)
}

/// One run of epoch-based gradient descent. Returns a dict with the summary
/// and per-epoch `f` / `grad_norm_sq` lists.
#[pyfunction]
#[pyo3(signature = (
    problem, strategy, gamma, epochs, x0=None, seed=0, target=None, metric="param_norm",
    k=None, update_every=None, order=None, zeta=0.0, p=0.0, max_steps=None
))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    strategy: &str,
    gamma: f64,
    epochs: u64,
    x0: Option<Vec<f64>>,
    seed: u64,
    target: Option<f64>,
    metric: &str,
    k: Option<usize>,
    update_every: Option<usize>,
    order: Option<Vec<usize>>,
    zeta: f64,
    p: f64,
    max_steps: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = strategy_spec(strategy, k, update_every, order)?;
    let oracle = oracle(zeta, p)?;
    let sched = schedule(gamma, epochs, target, metric, max_steps)?;
    let x0 = x0.unwrap_or_else(|| vec![1.0; problem.inner.dimension()]);
    problem.check_dim(&x0)?;
    let options = RunOptions {
        record_steps: false,
        ..RunOptions::full()
    };
    let trace = py
        .detach(|| run_engine(&problem.inner, &oracle, &spec, &sched, &x0.into(), seed, options))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("strategy", &trace.strategy)?;
    out.set_item("steps_to_target", trace.steps_to_target)?;
    out.set_item("diverged", trace.diverged)?;
    out.set_item("total_steps", trace.total_steps)?;
    out.set_item("final_f", trace.final_f)?;
    out.set_item("final_grad_norm_sq", trace.final_grad_norm_sq)?;
    out.set_item("final_x", trace.final_x.into_inner())?;
    out.set_item("epoch_f", trace.epochs.iter().map(|e| e.f).collect::<Vec<_>>())?;
    out.set_item(
        "epoch_grad_norm_sq",
        trace.epochs.iter().map(|e| e.grad_norm_sq).collect::<Vec<_>>(),
    )?;
    Ok(out)
}

/// Grid search over step sizes; returns `(best_lr, median_steps)`.
#[pyfunction]
#[pyo3(signature = (
    problem, strategy, lr_grid, seeds, epochs, target, x0=None, metric="param_norm",
    k=None, update_every=None, zeta=0.0, p=0.0, max_steps=None
))]
#[allow(clippy::too_many_arguments)]
fn tune_lr(
    py: Python<'_>,
    problem: &PyProblem,
    strategy: &str,
    lr_grid: Vec<f64>,
    seeds: Vec<u64>,
    epochs: u64,
    target: f64,
    x0: Option<Vec<f64>>,
    metric: &str,
    k: Option<usize>,
    update_every: Option<usize>,
    zeta: f64,
    p: f64,
    max_steps: Option<u64>,
) -> PyResult<(f64, f64)> {
    let spec = strategy_spec(strategy, k, update_every, None)?;
    let oracle = oracle(zeta, p)?;
    let sched = schedule(lr_grid.first().copied().unwrap_or(1.0), epochs, Some(target), metric, max_steps)?;
    let x0 = x0.unwrap_or_else(|| vec![1.0; problem.inner.dimension()]);
    problem.check_dim(&x0)?;
    let x0 = ParameterVector::from(x0);
    let result = py
        .detach(|| permgd::harness::tune_lr(&problem.inner, &oracle, &spec, &sched, &x0, &lr_grid, &seeds))
        .map_err(to_py)?;
    Ok((result.best_lr, result.median_steps))
}

/// `1.1 · 2^{−j}` for `j = 1..=20`.
#[pyfunction]
fn default_lr_grid() -> Vec<f64> {
    permgd::harness::default_lr_grid()
}

#[pymodule]
#[pyo3(name = "permgd")]
fn permgd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(greedy_order, m)?)?;
    m.add_function(wrap_pyfunction!(two_level_k_shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(random_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(phi_curve, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_star, m)?)?;
    m.add_function(wrap_pyfunction!(sample_bias_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(tune_lr, m)?)?;
    m.add_function(wrap_pyfunction!(default_lr_grid, m)?)?;
    Ok(())
}
