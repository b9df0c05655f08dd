//! Synthetic objectives with exact gradients.
//!
//! * `quadratic`: `f_i(X) = (L/2)‖X − C_i‖²`, centers `C_i = C + h·Z_i`.
//! * `counterexample`: the 2×2 problem `f(diag(x, y)) = Lx²/2 + Ly²/4` on which a
//!   frozen rank-1 projector never moves `y`. Off-diagonal entries are ignored.
//! * `logistic`: softmax regression with `m` classes and `n` features on
//!   Gaussian blobs. Features are rescaled so `max ‖a‖² = 2L`, which makes
//!   every `f_i` L-smooth.
//!
//! Stochastic gradients add i.i.d. Gaussian noise with per-entry variance
//! `σ²/(mn)`, so `E‖noise‖² = σ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{RngStream, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Counterexample,
    Logistic,
}

fn default_smoothness() -> f64 {
    1.0
}
fn default_samples() -> usize {
    64
}
fn default_separation() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub n: usize,
    /// Smoothness constant `L`.
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    #[serde(default)]
    pub sigma: f64,
    /// Spread of per-node quadratic centers; 0 makes all nodes identical.
    #[serde(default)]
    pub heterogeneity: f64,
    /// Logistic only.
    #[serde(default = "default_samples")]
    pub samples_per_node: usize,
    /// Logistic only: distance scale between class means.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

impl ProblemSpec {
    pub fn quadratic(m: usize, n: usize, smoothness: f64, sigma: f64, heterogeneity: f64) -> Self {
        Self {
            kind: ProblemKind::Quadratic,
            m,
            n,
            smoothness,
            sigma,
            heterogeneity,
            samples_per_node: default_samples(),
            separation: default_separation(),
        }
    }

    pub fn counterexample(smoothness: f64) -> Self {
        Self {
            kind: ProblemKind::Counterexample,
            m: 2,
            n: 2,
            smoothness,
            sigma: 0.0,
            heterogeneity: 0.0,
            samples_per_node: default_samples(),
            separation: default_separation(),
        }
    }

    pub fn logistic(classes: usize, features: usize, smoothness: f64, sigma: f64) -> Self {
        Self {
            kind: ProblemKind::Logistic,
            m: classes,
            n: features,
            smoothness,
            sigma,
            heterogeneity: 0.0,
            samples_per_node: default_samples(),
            separation: default_separation(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            ProblemKind::Counterexample => (2, 2),
            _ => (self.m, self.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.shape();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if m == 0 || n == 0 {
            return bad(format!("problem dimensions must be positive, got {m}x{n}"));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return bad(format!("smoothness must be positive, got {}", self.smoothness));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.heterogeneity >= 0.0 && self.heterogeneity.is_finite()) {
            return bad("heterogeneity must be nonnegative".into());
        }
        if self.kind == ProblemKind::Logistic && (m < 2 || self.samples_per_node == 0) {
            return bad("logistic needs at least 2 classes and 1 sample per node".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Objective {
    Quadratic { centers: Vec<DenseMatrix> },
    Counterexample,
    Logistic { shards: Vec<Shard> },
}

#[derive(Debug, Clone)]
struct Shard {
    /// One sample per row.
    features: DenseMatrix,
    labels: Vec<usize>,
}

/// A problem instance for a fixed number of nodes.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    n_nodes: usize,
    objective: Objective,
    initial: DenseMatrix,
}

const TAG_CENTER: u64 = 1;
const TAG_OFFSET_BASE: u64 = 1000;
const TAG_DATA: u64 = 2;

impl Problem {
    pub fn new(spec: &ProblemSpec, n_nodes: usize, base_seed: u64) -> Result<Self> {
        spec.validate()?;
        if n_nodes == 0 {
            return Err(Error::EmptyNodes);
        }
        let (m, n) = spec.shape();
        let (objective, initial) = match spec.kind {
            ProblemKind::Quadratic => {
                let shared =
                    RngStream::derive(base_seed, StreamKey::Problem { tag: TAG_CENTER }).normal_matrix(m, n);
                let centers = (0..n_nodes)
                    .map(|i| {
                        let mut c = shared.clone();
                        if spec.heterogeneity > 0.0 {
                            let z = RngStream::derive(
                                base_seed,
                                StreamKey::Problem {
                                    tag: TAG_OFFSET_BASE + i as u64,
                                },
                            )
                            .normal_matrix(m, n);
                            c.axpy(spec.heterogeneity, &z).expect("same shape");
                        }
                        c
                    })
                    .collect();
                (Objective::Quadratic { centers }, DenseMatrix::zeros(m, n))
            }
            ProblemKind::Counterexample => (Objective::Counterexample, DenseMatrix::identity(2)),
            ProblemKind::Logistic => (
                Objective::Logistic {
                    shards: build_shards(spec, n_nodes, base_seed),
                },
                DenseMatrix::zeros(m, n),
            ),
        };
        Ok(Self {
            spec: spec.clone(),
            n_nodes,
            objective,
            initial,
        })
    }

    /// Quadratic problem with explicit centers, one per node.
    pub fn quadratic_with_centers(smoothness: f64, sigma: f64, centers: Vec<DenseMatrix>) -> Result<Self> {
        let first = centers.first().ok_or(Error::EmptyNodes)?;
        let (m, n) = first.shape();
        let spec = ProblemSpec::quadratic(m, n, smoothness, sigma, 0.0);
        spec.validate()?;
        Ok(Self {
            spec,
            n_nodes: centers.len(),
            initial: DenseMatrix::zeros(m, n),
            objective: Objective::Quadratic { centers },
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn shape(&self) -> (usize, usize) {
        self.spec.shape()
    }

    pub fn smoothness(&self) -> f64 {
        self.spec.smoothness
    }

    pub fn initial_point(&self) -> DenseMatrix {
        self.initial.clone()
    }

    fn check(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::DimensionMismatch {
                op: "problem",
                left: self.shape(),
                right: x.shape(),
            });
        }
        Ok(())
    }

    pub fn local_loss(&self, node: usize, x: &DenseMatrix) -> Result<f64> {
        self.check(x)?;
        let l = self.spec.smoothness;
        Ok(match &self.objective {
            Objective::Quadratic { centers } => 0.5 * l * x.sub(&centers[node])?.frobenius_norm_sq(),
            Objective::Counterexample => counterexample_loss(l, x),
            Objective::Logistic { shards } => softmax_loss_grad(x, &shards[node], false).0,
        })
    }

    /// Global loss `(1/N) Σ f_i(X)`.
    pub fn loss(&self, x: &DenseMatrix) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.n_nodes {
            total += self.local_loss(i, x)?;
        }
        Ok(total / self.n_nodes as f64)
    }

    /// Exact local gradient `∇f_i(X)`.
    pub fn grad(&self, node: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(x)?;
        let l = self.spec.smoothness;
        Ok(match &self.objective {
            Objective::Quadratic { centers } => x.sub(&centers[node])?.scale(l),
            Objective::Counterexample => {
                DenseMatrix::from_diag(&[l * x.get(0, 0), 0.5 * l * x.get(1, 1)])
            }
            Objective::Logistic { shards } => softmax_loss_grad(x, &shards[node], true).1,
        })
    }

    /// `∇f(X) = (1/N) Σ ∇f_i(X)`.
    pub fn full_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let (m, n) = self.shape();
        let mut acc = DenseMatrix::zeros(m, n);
        for i in 0..self.n_nodes {
            acc.add_assign(&self.grad(i, x)?)?;
        }
        acc.scale_in_place(1.0 / self.n_nodes as f64);
        Ok(acc)
    }

    pub fn stochastic_grad(&self, node: usize, x: &DenseMatrix, rng: &mut RngStream) -> Result<DenseMatrix> {
        let mut g = self.grad(node, x)?;
        if self.spec.sigma > 0.0 {
            let std = self.spec.sigma / (g.len() as f64).sqrt();
            for v in g.as_mut_slice() {
                *v += std * rng.standard_normal();
            }
        }
        Ok(g)
    }
}

fn counterexample_loss(l: f64, x: &DenseMatrix) -> f64 {
    let (a, b) = (x.get(0, 0), x.get(1, 1));
    l * a * a / 2.0 + l * b * b / 4.0
}

fn build_shards(spec: &ProblemSpec, n_nodes: usize, base_seed: u64) -> Vec<Shard> {
    let (classes, dim) = spec.shape();
    let mut rng = RngStream::derive(base_seed, StreamKey::Problem { tag: TAG_DATA });
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            rng.normal_vec(dim)
                .into_iter()
                .map(|v| v * spec.separation / (dim as f64).sqrt())
                .collect()
        })
        .collect();
    let total = n_nodes * spec.samples_per_node;
    // Label-sorted, so contiguous chunks give each node a skewed label mix.
    let labels: Vec<usize> = (0..total).map(|k| k * classes / total).collect();
    let mut samples: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| {
            means[c]
                .iter()
                .map(|mu| mu + rng.standard_normal() / (dim as f64).sqrt())
                .collect()
        })
        .collect();
    let max_sq = samples
        .iter()
        .map(|a| a.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = if max_sq > 0.0 {
        (2.0 * spec.smoothness / max_sq).sqrt()
    } else {
        1.0
    };
    for a in &mut samples {
        a.iter_mut().for_each(|v| *v *= scale);
    }
    (0..n_nodes)
        .map(|i| {
            let range = i * spec.samples_per_node..(i + 1) * spec.samples_per_node;
            let rows: Vec<f64> = samples[range.clone()].iter().flatten().copied().collect();
            Shard {
                features: DenseMatrix::from_vec(spec.samples_per_node, dim, rows),
                labels: labels[range].to_vec(),
            }
        })
        .collect()
}

/// Mean cross-entropy of `softmax(X a)` and, if asked, its gradient `mean (p − y) aᵀ`.
fn softmax_loss_grad(x: &DenseMatrix, shard: &Shard, want_grad: bool) -> (f64, DenseMatrix) {
    let (classes, dim) = x.shape();
    let count = shard.labels.len();
    // logits: samples × classes
    let logits = shard.features.matmul(&x.transpose()).expect("shapes fixed at construction");
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(classes, dim);
    for (s, &label) in shard.labels.iter().enumerate() {
        let row = logits.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += z.ln() + max - row[label];
        if want_grad {
            let a = shard.features.row(s);
            for (c, &logit) in row.iter().enumerate() {
                let p = (logit - max).exp() / z;
                let coeff = p - if c == label { 1.0 } else { 0.0 };
                for (j, av) in a.iter().enumerate() {
                    grad.set(c, j, grad.get(c, j) + coeff * av);
                }
            }
        }
    }
    grad.scale_in_place(1.0 / count as f64);
    (loss / count as f64, grad)
}
