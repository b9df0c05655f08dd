//! Projector selection and gradient compressors.
//!
//! The low-rank compressors all have the form `C(G) = P Pᵀ G`; they differ in
//! how `P` is chosen:
//!
//! * lazy SVD: `P = U[:, :r]` from an SVD at the period start, frozen until
//!   the next one;
//! * semi-lazy SVD: same `U`, but every step re-selects the `r` columns of `U`
//!   that capture the most energy of the current global gradient, either
//!   exactly or through a shared Gaussian sketch;
//! * random: orthonormalized Gaussian columns, independent of the gradient.
//!
//! Top-k and rand-k sparsifiers are kept as non-low-rank baselines.

use serde::{Deserialize, Serialize};

use crate::comm::{all_reduce_mean, CommKind, CommLedger};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::projector::{project, reconstruct, Projector};
use crate::rng::RngStream;
use crate::svd::svd_full;

/// How the semi-lazy operator picks columns between SVDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Shared-seed sketch; one `m`-vector all-reduce per step.
    #[default]
    Approx,
    /// Exact global energies; needs the full averaged gradient every step.
    Exact,
}

fn default_true() -> bool {
    true
}

/// Algorithm registry. Rank and period live on the run config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorKind {
    /// Error feedback + semi-lazy SVD.
    #[serde(rename = "greedylore")]
    GreedyLore {
        #[serde(default)]
        selection: Selection,
        #[serde(default = "default_true")]
        error_feedback: bool,
    },
    /// The basic framework: lazy SVD, no error feedback unless asked for.
    LazySvd {
        #[serde(default)]
        error_feedback: bool,
    },
    /// Distributed GaLore: lazy SVD with optimizer state kept in the subspace.
    #[serde(rename = "galore")]
    GaLore,
    /// Random subspace, resampled at each period start.
    RandomLowrank,
    /// Top-k sparsification with error feedback.
    TopK { k: usize },
    /// Unbiased rand-k sparsification.
    RandK { k: usize },
    /// Uncompressed data-parallel training.
    None,
}

impl CompressorKind {
    pub fn greedylore() -> Self {
        CompressorKind::GreedyLore {
            selection: Selection::Approx,
            error_feedback: true,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CompressorKind::GreedyLore { .. } => "greedylore",
            CompressorKind::LazySvd { .. } => "lazy_svd",
            CompressorKind::GaLore => "galore",
            CompressorKind::RandomLowrank => "random_lowrank",
            CompressorKind::TopK { .. } => "top_k",
            CompressorKind::RandK { .. } => "rand_k",
            CompressorKind::None => "none",
        }
    }

    pub fn is_low_rank(&self) -> bool {
        matches!(
            self,
            CompressorKind::GreedyLore { .. }
                | CompressorKind::LazySvd { .. }
                | CompressorKind::GaLore
                | CompressorKind::RandomLowrank
        )
    }
}

/// Indices of the `r` largest scores, smaller index winning ties, returned in
/// ascending order.
pub fn top_indices(scores: &[f64], r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(r).collect();
    picked.sort_unstable();
    picked
}

fn check_rank(r: usize, m: usize) -> Result<()> {
    if r > m {
        return Err(Error::RankExceedsRows { rank: r, rows: m });
    }
    Ok(())
}

/// The cached basis and current projector of one low-rank compressor.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressorState {
    basis_u: DenseMatrix,
    projector: Projector,
    period: usize,
    rank: usize,
    step_in_period: usize,
}

impl CompressorState {
    /// Starts from `U = I_m` and `P = I_m[:, :r]`.
    pub fn new(m: usize, rank: usize, period: usize) -> Result<Self> {
        check_rank(rank, m)?;
        if rank == 0 || period == 0 {
            return Err(Error::InvalidConfig(
                "rank and period must be positive".into(),
            ));
        }
        let basis_u = DenseMatrix::identity(m);
        let projector = Projector::leading(&basis_u, rank);
        Ok(Self {
            basis_u,
            projector,
            period,
            rank,
            step_in_period: 0,
        })
    }

    pub fn basis_u(&self) -> &DenseMatrix {
        &self.basis_u
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn step_in_period(&self) -> usize {
        self.step_in_period
    }

    pub fn is_period_start(&self, t: usize) -> bool {
        t.is_multiple_of(self.period)
    }

    /// SVD of the averaged gradient; caches `U` and sets `P = U[:, :r]`.
    pub fn refresh_basis(&mut self, g_avg: &DenseMatrix) -> Result<&Projector> {
        if g_avg.rows() != self.basis_u.rows() {
            return Err(Error::DimensionMismatch {
                op: "refresh_basis",
                left: self.basis_u.shape(),
                right: g_avg.shape(),
            });
        }
        let svd = svd_full(g_avg)?;
        self.basis_u = svd.u;
        self.projector = Projector::leading(&self.basis_u, self.rank);
        Ok(&self.projector)
    }

    /// Lazy SVD: re-decompose at period starts, otherwise keep `P`.
    /// `g_avg` is only read when `t` starts a period.
    pub fn lazy_svd_update(&mut self, g_avg: &DenseMatrix, t: usize) -> Result<&Projector> {
        self.step_in_period = t % self.period;
        if self.step_in_period == 0 {
            self.refresh_basis(g_avg)?;
        }
        Ok(&self.projector)
    }

    /// Installs a projector chosen elsewhere (column selection, random draw).
    pub fn set_projector(&mut self, p: Projector, t: usize) {
        self.step_in_period = t % self.period;
        self.projector = p;
    }
}

/// `[U]_{:,J}` with `J` the `r` largest `‖u_jᵀ G‖²`.
pub fn exact_top_r_select(basis_u: &DenseMatrix, g_global: &DenseMatrix, r: usize) -> Result<Projector> {
    check_rank(r, basis_u.rows())?;
    let energies = basis_u.t_matmul(g_global)?.row_norms_sq();
    Ok(Projector::from_columns(basis_u, &top_indices(&energies, r)))
}

/// Shared Gaussian sketch vectors `v_1..v_m ∈ R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    vectors: DenseMatrix,
}

impl Sketch {
    /// Draws `m` vectors of length `n`, vector by vector.
    pub fn draw(m: usize, n: usize, rng: &mut RngStream) -> Self {
        Self {
            vectors: rng.normal_matrix(m, n),
        }
    }

    /// `λ_j = u_jᵀ G v_j` for every column `u_j` of `basis_u`, as a `1 × m` row.
    pub fn lambdas(&self, basis_u: &DenseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
        let ug = basis_u.t_matmul(g)?;
        if ug.shape() != self.vectors.shape() {
            return Err(Error::DimensionMismatch {
                op: "sketch",
                left: self.vectors.shape(),
                right: ug.shape(),
            });
        }
        let m = ug.rows();
        let values = (0..m)
            .map(|j| {
                ug.row(j)
                    .iter()
                    .zip(self.vectors.row(j))
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(DenseMatrix::from_vec(1, m, values))
    }
}

/// Averaged sketch values `λ̄_j` across nodes. Charges one `m`-vector per node.
pub fn averaged_lambdas(
    local_grads: &[DenseMatrix],
    basis_u: &DenseMatrix,
    sketch: &Sketch,
    ledger: &mut CommLedger,
) -> Result<Vec<f64>> {
    if local_grads.is_empty() {
        return Err(Error::EmptyNodes);
    }
    let locals = local_grads
        .iter()
        .map(|g| sketch.lambdas(basis_u, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(all_reduce_mean(&locals, ledger, CommKind::LambdaVec)?.into_vec())
}

/// Approximate global top-r: ranks columns of `U` by `λ̄_j²`.
pub fn approx_top_r(
    local_grads: &[DenseMatrix],
    basis_u: &DenseMatrix,
    r: usize,
    shared_rng: &mut RngStream,
    ledger: &mut CommLedger,
) -> Result<Projector> {
    let first = local_grads.first().ok_or(Error::EmptyNodes)?;
    check_rank(r, basis_u.rows())?;
    let sketch = Sketch::draw(basis_u.rows(), first.cols(), shared_rng);
    let lambdas = averaged_lambdas(local_grads, basis_u, &sketch, ledger)?;
    let scores: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    Ok(Projector::from_columns(basis_u, &top_indices(&scores, r)))
}

/// `P Pᵀ G`. A full-rank projector returns `G` untouched.
pub fn compress(p: &Projector, g: &DenseMatrix) -> Result<DenseMatrix> {
    if p.rows() != g.rows() {
        return Err(Error::DimensionMismatch {
            op: "compress",
            left: p.basis().shape(),
            right: g.shape(),
        });
    }
    if p.is_full_rank() {
        return Ok(g.clone());
    }
    reconstruct(p, &project(p, g)?)
}

/// Modified Gram–Schmidt (column order) of an `m × r` Gaussian draw.
pub fn random_lowrank_projector(m: usize, r: usize, rng: &mut RngStream) -> Result<Projector> {
    check_rank(r, m)?;
    let draw = rng.normal_matrix(m, r);
    let mut cols: Vec<Vec<f64>> = (0..r).map(|j| draw.column(j)).collect();
    for j in 0..r {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for q in done.iter() {
            let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(q) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 0.0, "degenerate Gaussian draw");
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(Projector::new(DenseMatrix::from_fn(m, r, |i, j| cols[j][i])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsifyKind {
    TopK,
    RandK,
}

/// Top-k keeps the k largest magnitudes (row-major index breaks ties).
/// Rand-k keeps k uniformly chosen entries scaled by `len / k`.
pub fn sparsify(
    kind: SparsifyKind,
    g: &DenseMatrix,
    k: usize,
    rng: &mut RngStream,
) -> Result<DenseMatrix> {
    let len = g.len();
    if k == 0 || k > len {
        return Err(Error::SparsityOutOfRange { k, len });
    }
    let mut out = DenseMatrix::zeros(g.rows(), g.cols());
    let src = g.as_slice();
    let dst = out.as_mut_slice();
    match kind {
        SparsifyKind::TopK => {
            let mags: Vec<f64> = src.iter().map(|v| v.abs()).collect();
            for i in top_indices(&mags, k) {
                dst[i] = src[i];
            }
        }
        SparsifyKind::RandK => {
            let scale = len as f64 / k as f64;
            for i in rand::seq::index::sample(rng, len, k) {
                dst[i] = src[i] * scale;
            }
        }
    }
    Ok(out)
}

/// `‖ĝ − g‖² / ‖g‖²`.
pub fn contraction_ratio(g: &DenseMatrix, g_hat: &DenseMatrix) -> Result<f64> {
    let denom = g.frobenius_norm_sq();
    if denom == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(g_hat.sub(g)?.frobenius_norm_sq() / denom)
}
