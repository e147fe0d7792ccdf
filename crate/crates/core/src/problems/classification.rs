use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Purpose, RngStream};

use super::{FiniteSum, SharedProblem};

/// How data points are grouped into the fixed mini-batches that form the
/// components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// Every batch holds points of a single class; batches never change.
    SameClass,
    /// Batches are consecutive chunks of a random permutation of all points.
    Standard { redraw_each_epoch: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Distance of every class mean from the origin.
    pub separation: f64,
    pub l2: f64,
    pub batching: Batching,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 30,
            dim: 5,
            batch_size: 10,
            seed: 0,
            separation: 3.0,
            l2: 1e-2,
            batching: Batching::SameClass,
        }
    }
}

#[derive(Debug)]
struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl Dataset {
    fn point(&self, k: usize) -> &[f64] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Softmax regression on Gaussian blobs. Each component is the mean
/// cross-entropy over one fixed mini-batch plus an `l2` penalty; parameters
/// are the `classes × dim` weight matrix (row-major) followed by the biases.
#[derive(Debug, Clone)]
pub struct Classification {
    spec: ClassificationSpec,
    data: Arc<Dataset>,
    batches: Vec<Vec<usize>>,
    smoothness: f64,
}

impl Classification {
    pub fn new(spec: ClassificationSpec) -> Result<Self> {
        if spec.classes < 2 || spec.per_class == 0 || spec.dim == 0 || spec.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "classification needs classes >= 2 and positive per_class, dim, batch_size".into(),
            ));
        }
        if spec.per_class % spec.batch_size != 0 {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} does not divide per_class {}",
                spec.batch_size, spec.per_class
            )));
        }
        if !(spec.separation >= 0.0 && spec.l2 >= 0.0) {
            return Err(Error::InvalidArgument("separation and l2 must be >= 0".into()));
        }
        let data = Arc::new(generate(&spec));
        let max_sq = (0..data.len())
            .map(|k| data.point(k).iter().map(|a| a * a).sum::<f64>() + 1.0)
            .fold(0.0, f64::max);
        // softmax cross-entropy Hessian in logits has norm <= 1/2
        let smoothness = 0.5 * max_sq + spec.l2;
        let batches = match spec.batching {
            Batching::SameClass => same_class_batches(&spec),
            Batching::Standard { .. } => {
                standard_batches(&spec, RngStream::new(spec.seed, Purpose::Batching))
            }
        };
        Ok(Self {
            spec,
            data,
            batches,
            smoothness,
        })
    }

    pub fn spec(&self) -> &ClassificationSpec {
        &self.spec
    }

    /// Point indices of component `i`.
    pub fn batch(&self, i: usize) -> &[usize] {
        &self.batches[i]
    }

    pub fn label(&self, point: usize) -> usize {
        self.data.labels[point]
    }

    /// Same data with a different batching scheme.
    pub fn rebatched(&self, batching: Batching) -> Self {
        let spec = ClassificationSpec {
            batching,
            ..self.spec.clone()
        };
        let batches = match batching {
            Batching::SameClass => same_class_batches(&spec),
            Batching::Standard { .. } => {
                standard_batches(&spec, RngStream::new(spec.seed, Purpose::Batching))
            }
        };
        Self {
            spec,
            data: Arc::clone(&self.data),
            batches,
            smoothness: self.smoothness,
        }
    }

    fn param_dim(&self) -> usize {
        self.spec.classes * (self.spec.dim + 1)
    }

    fn logits(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        let (c, d) = (self.spec.classes, self.spec.dim);
        let bias = &x[c * d..];
        for k in 0..c {
            let w = &x[k * d..(k + 1) * d];
            out[k] = w.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + bias[k];
        }
    }

    fn point_loss(&self, x: &[f64], k: usize, z: &mut [f64]) -> f64 {
        self.logits(x, self.data.point(k), z);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - z[self.data.labels[k]]
    }

    /// Adds `scale * ∇loss_k(x)` to `out`.
    fn add_point_gradient(&self, x: &[f64], k: usize, scale: f64, z: &mut [f64], out: &mut [f64]) {
        let (c, d) = (self.spec.classes, self.spec.dim);
        let a = self.data.point(k);
        self.logits(x, a, z);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in z.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        let label = self.data.labels[k];
        for cls in 0..c {
            let mut dz = z[cls] / total;
            if cls == label {
                dz -= 1.0;
            }
            let dz = dz * scale;
            let row = &mut out[cls * d..(cls + 1) * d];
            row.iter_mut().zip(a).for_each(|(o, ai)| *o += dz * ai);
            out[c * d + cls] += dz;
        }
    }
}

fn generate(spec: &ClassificationSpec) -> Dataset {
    let (c, p, d) = (spec.classes, spec.per_class, spec.dim);
    let mut features = Vec::with_capacity(c * p * d);
    let mut labels = Vec::with_capacity(c * p);
    for cls in 0..c {
        let mut rng = RngStream::new(spec.seed, Purpose::Data).at(0, cls as u64).rng();
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let mean: Vec<f64> = dir.iter().map(|v| spec.separation * v / norm).collect();
        let mut rng = RngStream::new(spec.seed, Purpose::Data).at(1, cls as u64).rng();
        for _ in 0..p {
            for m in &mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(m + z);
            }
            labels.push(cls);
        }
    }
    Dataset { features, labels, dim: d }
}

fn same_class_batches(spec: &ClassificationSpec) -> Vec<Vec<usize>> {
    let (p, tau) = (spec.per_class, spec.batch_size);
    (0..spec.classes)
        .flat_map(|cls| (0..p / tau).map(move |b| (0..tau).map(|k| cls * p + b * tau + k).collect()))
        .collect()
}

fn standard_batches(spec: &ClassificationSpec, stream: RngStream) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..spec.classes * spec.per_class).collect();
    perm.shuffle(&mut stream.rng());
    perm.chunks(spec.batch_size).map(|c| c.to_vec()).collect()
}

impl FiniteSum for Classification {
    fn dimension(&self) -> usize {
        self.param_dim()
    }

    fn component_count(&self) -> usize {
        self.batches.len()
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.spec.classes];
        let batch = &self.batches[i];
        let loss = batch.iter().map(|&k| self.point_loss(x, k, &mut z)).sum::<f64>() / batch.len() as f64;
        loss + 0.5 * self.spec.l2 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; self.spec.classes];
        let batch = &self.batches[i];
        let scale = 1.0 / batch.len() as f64;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = self.spec.l2 * xi);
        for &k in batch {
            self.add_point_gradient(x, k, scale, &mut z, out);
        }
    }

    fn for_epoch(&self, epoch: u64, seed: u64) -> Option<SharedProblem> {
        match self.spec.batching {
            Batching::Standard { redraw_each_epoch: true } => {
                let stream = RngStream::new(seed, Purpose::Batching).at(epoch, 1);
                Some(Arc::new(Self {
                    spec: self.spec.clone(),
                    data: Arc::clone(&self.data),
                    batches: standard_batches(&self.spec, stream),
                    smoothness: self.smoothness,
                }))
            }
            _ => None,
        }
    }
}
