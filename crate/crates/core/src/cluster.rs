//! The simulated data-parallel loop.
//!
//! One step has three phases:
//!
//! 1. compute: every worker draws a stochastic gradient at its own replica of
//!    `X_t` (workers are independent and may run in parallel);
//! 2. reduce: the configured algorithm exchanges full gradients, sketch
//!    vectors, low-rank representations or sparse vectors through
//!    [`all_reduce_mean`], which charges the ledger;
//! 3. update: every worker applies the same optimizer step to its replica.
//!
//! Compression happens in a working orientation with rows ≤ cols: gradients
//! with more rows than columns are transposed before compression and the
//! reconstructed update is transposed back. Error buffers live in the working
//! orientation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comm::{all_reduce_mean, tree_mean, CommKind, CommLedger};
use crate::compressors::{
    approx_top_r, averaged_lambdas, contraction_ratio, exact_top_r_select,
    random_lowrank_projector, sparsify, CompressorKind, CompressorState, Selection, Sketch,
    SparsifyKind,
};
use crate::error::{Error, Result};
use crate::feedback::ErrorBuffer;
use crate::matrix::DenseMatrix;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::problems::{Problem, ProblemSpec};
use crate::projector::{project, reconstruct, Projector};
use crate::rng::{RngStream, StreamKey};
pub use crate::trace::{trace_csv, IterationTrace, TRACE_HEADER};

fn one() -> usize {
    1
}
fn fifty() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_nodes: usize,
    pub steps: usize,
    /// Subspace period `τ`.
    #[serde(default = "one")]
    pub period: usize,
    #[serde(default = "one")]
    pub rank: usize,
    pub optimizer: OptimizerConfig,
    pub compressor: CompressorKind,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub metrics_every: usize,
    /// Replica states are compared bitwise every this many steps.
    #[serde(default = "fifty")]
    pub replica_check_every: usize,
    /// Run the compute phase on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_nodes == 0 {
            return bad("n_nodes must be at least 1");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.period == 0 {
            return bad("period must be at least 1");
        }
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if self.metrics_every == 0 || self.replica_check_every == 0 {
            return bad("metrics_every and replica_check_every must be at least 1");
        }
        self.optimizer.validate()?;
        self.problem.validate()?;
        let (m, n) = self.problem.shape();
        if let CompressorKind::TopK { k } | CompressorKind::RandK { k } = self.compressor {
            if k == 0 || k > m * n {
                return Err(Error::SparsityOutOfRange { k, len: m * n });
            }
        }
        Ok(())
    }

    /// Shape compression operates on: `(min(m,n), max(m,n))`.
    pub fn working_shape(&self) -> (usize, usize) {
        let (m, n) = self.problem.shape();
        (m.min(n), m.max(n))
    }

    /// Rank actually used; `r ≥ min(m,n)` means no compression.
    pub fn effective_rank(&self) -> usize {
        self.rank.min(self.working_shape().0)
    }
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    /// 1-based.
    pub node_id: usize,
    pub error: ErrorBuffer,
    pub x: DenseMatrix,
    pub optimizer: Optimizer,
}

/// What the update phase applies on every replica.
enum Update {
    /// Feed this gradient (original orientation) to the optimizer.
    Gradient(DenseMatrix),
    /// GaLore: optimizer runs on the `r × n` subspace representation, the
    /// result is lifted with `P` (working orientation).
    Subspace { p: Projector, r: DenseMatrix },
}

pub struct StepReport {
    pub step: usize,
    pub contraction: Option<f64>,
}

pub struct Simulator {
    cfg: RunConfig,
    problem: Problem,
    workers: Vec<WorkerState>,
    comp: CompressorState,
    ledger: CommLedger,
    t: usize,
    transposed: bool,
    visit_order: Vec<usize>,
}

impl Simulator {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = Problem::new(&cfg.problem, cfg.n_nodes, cfg.seed)?;
        Self::with_problem(cfg, problem)
    }

    /// Uses a prebuilt problem instance; its shape and node count must match
    /// the config.
    pub fn with_problem(cfg: RunConfig, problem: Problem) -> Result<Self> {
        cfg.validate()?;
        if problem.shape() != cfg.problem.shape() || problem.n_nodes() != cfg.n_nodes {
            return Err(Error::InvalidConfig(
                "problem instance does not match config shape or node count".into(),
            ));
        }
        let (m, n) = problem.shape();
        let (mw, nw) = cfg.working_shape();
        let r = cfg.effective_rank();
        let opt_shape = match cfg.compressor {
            CompressorKind::GaLore => (r, nw),
            _ => (m, n),
        };
        let x0 = problem.initial_point();
        let workers = (0..cfg.n_nodes)
            .map(|i| WorkerState {
                node_id: i + 1,
                error: ErrorBuffer::zeros(mw, nw),
                x: x0.clone(),
                optimizer: cfg.optimizer.build(opt_shape.0, opt_shape.1),
            })
            .collect();
        Ok(Self {
            comp: CompressorState::new(mw, r, cfg.period)?,
            transposed: m > n,
            visit_order: (0..cfg.n_nodes).collect(),
            cfg,
            problem,
            workers,
            ledger: CommLedger::new(),
            t: 0,
        })
    }

    /// Order in which the compute phase visits workers. Results are keyed by
    /// node, so any permutation yields identical outputs.
    pub fn set_visit_order(&mut self, order: Vec<usize>) -> Result<()> {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..self.cfg.n_nodes).collect::<Vec<_>>() {
            return Err(Error::InvalidConfig("visit order must permute the nodes".into()));
        }
        self.visit_order = order;
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn compressor_state(&self) -> &CompressorState {
        &self.comp
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    /// Replica of `X_t` held by the first worker.
    pub fn x(&self) -> &DenseMatrix {
        &self.workers[0].x
    }

    pub fn replicas_agree(&self) -> bool {
        let first = &self.workers[0];
        self.workers
            .iter()
            .all(|w| w.x.bit_eq(&first.x) && w.optimizer.bit_eq(&first.optimizer))
    }

    fn orient(&self, g: &DenseMatrix) -> DenseMatrix {
        if self.transposed {
            g.transpose()
        } else {
            g.clone()
        }
    }

    fn orient_back(&self, g: DenseMatrix) -> DenseMatrix {
        if self.transposed {
            g.transpose()
        } else {
            g
        }
    }

    fn compute_phase(&self, t: usize) -> Result<Vec<DenseMatrix>> {
        let seed = self.cfg.seed;
        let grad_for = |idx: usize| {
            let w = &self.workers[idx];
            let mut rng = RngStream::derive(
                seed,
                StreamKey::Noise {
                    node: w.node_id as u64,
                    step: t as u64,
                },
            );
            self.problem.stochastic_grad(idx, &w.x, &mut rng)
        };
        if self.cfg.parallel {
            (0..self.workers.len()).into_par_iter().map(grad_for).collect()
        } else {
            let mut out: Vec<Option<DenseMatrix>> = vec![None; self.workers.len()];
            for &idx in &self.visit_order {
                out[idx] = Some(grad_for(idx)?);
            }
            Ok(out.into_iter().map(|g| g.expect("every node visited")).collect())
        }
    }

    /// Sends `R_i = Pᵀ g_i` through the all-reduce and returns `(R_i, P R)`.
    /// A full-rank projector sends `g_i` unchanged when `shortcut` is set.
    fn lowrank_exchange(
        &mut self,
        p: &Projector,
        gs: &[DenseMatrix],
        shortcut: bool,
    ) -> Result<(Vec<DenseMatrix>, DenseMatrix)> {
        if shortcut && p.is_full_rank() {
            let mean = all_reduce_mean(gs, &mut self.ledger, CommKind::LowRank)?;
            return Ok((gs.to_vec(), mean));
        }
        let locals = gs.iter().map(|g| project(p, g)).collect::<Result<Vec<_>>>()?;
        let r = all_reduce_mean(&locals, &mut self.ledger, CommKind::LowRank)?;
        let g_hat = reconstruct(p, &r)?;
        Ok((locals, g_hat))
    }

    fn inject_errors(&self, ws: Vec<DenseMatrix>, enabled: bool) -> Result<Vec<DenseMatrix>> {
        if !enabled {
            return Ok(ws);
        }
        ws.iter()
            .zip(&self.workers)
            .map(|(w, worker)| worker.error.inject(w))
            .collect()
    }

    fn observed_contraction(g_hat: &DenseMatrix, gs: &[DenseMatrix]) -> Result<Option<f64>> {
        let g_bar = tree_mean(gs)?;
        match contraction_ratio(&g_bar, g_hat) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedRatio) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn shared_rng(&self, t: usize) -> RngStream {
        RngStream::derive(self.cfg.seed, StreamKey::Shared { step: t as u64 })
    }

    fn greedylore(
        &mut self,
        raws: &[DenseMatrix],
        t: usize,
        selection: Selection,
        error_feedback: bool,
    ) -> Result<(Update, Option<f64>)> {
        let ws: Vec<DenseMatrix> = raws.iter().map(|g| self.orient(g)).collect();
        let gs = self.inject_errors(ws, error_feedback)?;
        let r = self.comp.rank();
        let full_rank = r >= self.comp.basis_u().rows();

        if self.comp.is_period_start(t) {
            let g_avg = all_reduce_mean(&gs, &mut self.ledger, CommKind::FullGrad)?;
            let p = if full_rank {
                Projector::identity(g_avg.rows())
            } else {
                self.comp.refresh_basis(&g_avg)?.clone()
            };
            self.comp.set_projector(p.clone(), t);
            if !full_rank && selection == Selection::Approx {
                // The sketch exchange runs every step; on a period start its
                // selection is superseded by U[:, :r].
                let sketch = Sketch::draw(g_avg.rows(), g_avg.cols(), &mut self.shared_rng(t));
                averaged_lambdas(&gs, self.comp.basis_u(), &sketch, &mut self.ledger)?;
            }
            self.lowrank_exchange(&p, &gs, true)?;
            for w in &mut self.workers {
                w.error.reset();
            }
            let g_hat = self.orient_back(g_avg);
            return Ok((Update::Gradient(g_hat), Some(0.0)));
        }

        let p = if full_rank {
            Projector::identity(self.comp.basis_u().rows())
        } else {
            match selection {
                Selection::Approx => {
                    let mut rng = self.shared_rng(t);
                    approx_top_r(&gs, self.comp.basis_u(), r, &mut rng, &mut self.ledger)?
                }
                Selection::Exact => {
                    let g_avg = all_reduce_mean(&gs, &mut self.ledger, CommKind::FullGrad)?;
                    exact_top_r_select(self.comp.basis_u(), &g_avg, r)?
                }
            }
        };
        self.comp.set_projector(p.clone(), t);
        let (locals, g_hat) = self.lowrank_exchange(&p, &gs, true)?;
        if error_feedback {
            let period = self.cfg.period;
            for ((w, g), rl) in self.workers.iter_mut().zip(&gs).zip(&locals) {
                w.error.update(g, &p, rl, t, period)?;
            }
        }
        let contraction = Self::observed_contraction(&g_hat, &gs)?;
        Ok((Update::Gradient(self.orient_back(g_hat)), contraction))
    }

    fn basic_framework(
        &mut self,
        raws: &[DenseMatrix],
        t: usize,
        error_feedback: bool,
    ) -> Result<(Update, Option<f64>)> {
        let ws: Vec<DenseMatrix> = raws.iter().map(|g| self.orient(g)).collect();
        let gs = self.inject_errors(ws, error_feedback)?;
        let full_rank = self.comp.rank() >= self.comp.basis_u().rows();

        if self.comp.is_period_start(t) {
            let g_avg = all_reduce_mean(&gs, &mut self.ledger, CommKind::FullGrad)?;
            if full_rank {
                self.comp.set_projector(Projector::identity(g_avg.rows()), t);
            } else {
                self.comp.lazy_svd_update(&g_avg, t)?;
            }
            let p = self.comp.projector().clone();
            self.lowrank_exchange(&p, &gs, true)?;
            for w in &mut self.workers {
                w.error.reset();
            }
            return Ok((Update::Gradient(self.orient_back(g_avg)), Some(0.0)));
        }

        let p = self.comp.projector().clone();
        let (locals, g_hat) = self.lowrank_exchange(&p, &gs, true)?;
        if error_feedback {
            let period = self.cfg.period;
            for ((w, g), rl) in self.workers.iter_mut().zip(&gs).zip(&locals) {
                w.error.update(g, &p, rl, t, period)?;
            }
        }
        let contraction = Self::observed_contraction(&g_hat, &gs)?;
        Ok((Update::Gradient(self.orient_back(g_hat)), contraction))
    }

    fn galore(&mut self, raws: &[DenseMatrix], t: usize) -> Result<(Update, Option<f64>)> {
        let gs: Vec<DenseMatrix> = raws.iter().map(|g| self.orient(g)).collect();
        if self.comp.is_period_start(t) {
            let g_avg = all_reduce_mean(&gs, &mut self.ledger, CommKind::FullGrad)?;
            self.comp.lazy_svd_update(&g_avg, t)?;
            for w in &mut self.workers {
                w.optimizer.reset_moments();
            }
        }
        let p = self.comp.projector().clone();
        let locals = gs.iter().map(|g| project(&p, g)).collect::<Result<Vec<_>>>()?;
        let r = all_reduce_mean(&locals, &mut self.ledger, CommKind::LowRank)?;
        let contraction = Self::observed_contraction(&reconstruct(&p, &r)?, &gs)?;
        Ok((Update::Subspace { p, r }, contraction))
    }

    fn random_lowrank(&mut self, raws: &[DenseMatrix], t: usize) -> Result<(Update, Option<f64>)> {
        let gs: Vec<DenseMatrix> = raws.iter().map(|g| self.orient(g)).collect();
        if self.comp.is_period_start(t) {
            let (mw, r) = (self.comp.basis_u().rows(), self.comp.rank());
            let p = random_lowrank_projector(mw, r, &mut self.shared_rng(t))?;
            self.comp.set_projector(p, t);
        }
        let p = self.comp.projector().clone();
        let (_, g_hat) = self.lowrank_exchange(&p, &gs, true)?;
        let contraction = Self::observed_contraction(&g_hat, &gs)?;
        Ok((Update::Gradient(self.orient_back(g_hat)), contraction))
    }

    fn sparsified(
        &mut self,
        raws: &[DenseMatrix],
        t: usize,
        kind: SparsifyKind,
        k: usize,
    ) -> Result<(Update, Option<f64>)> {
        let with_feedback = kind == SparsifyKind::TopK;
        let (m, n) = raws[0].shape();
        // Sparsifiers ignore orientation; keep error buffers in the raw shape.
        if with_feedback && self.workers[0].error.residual().shape() != (m, n) {
            for w in &mut self.workers {
                w.error = ErrorBuffer::zeros(m, n);
            }
        }
        let gs = self.inject_errors(raws.to_vec(), with_feedback)?;
        let mut sent = Vec::with_capacity(gs.len());
        for (w, g) in self.workers.iter_mut().zip(&gs) {
            let mut rng = RngStream::derive(
                self.cfg.seed,
                StreamKey::Sparsifier {
                    node: w.node_id as u64,
                    step: t as u64,
                },
            );
            let c = sparsify(kind, g, k, &mut rng)?;
            if with_feedback {
                w.error.set_residual(g, &c)?;
            }
            sent.push(c);
        }
        let g_hat = tree_mean(&sent)?;
        // values + indices
        self.ledger.record(CommKind::Sparse, 2 * k as u64);
        let contraction = Self::observed_contraction(&g_hat, &gs)?;
        Ok((Update::Gradient(g_hat), contraction))
    }

    /// Runs step `t` and advances to `t + 1`.
    pub fn step(&mut self) -> Result<StepReport> {
        let t = self.t;
        self.ledger.begin_step(t);
        let lr = self
            .cfg
            .optimizer
            .schedule()
            .lr_at(self.cfg.optimizer.lr(), t, self.cfg.steps);
        for w in &mut self.workers {
            w.optimizer.set_lr(lr);
        }

        let raws = self.compute_phase(t)?;
        let (update, contraction) = match self.cfg.compressor {
            CompressorKind::GreedyLore {
                selection,
                error_feedback,
            } => self.greedylore(&raws, t, selection, error_feedback)?,
            CompressorKind::LazySvd { error_feedback } => {
                self.basic_framework(&raws, t, error_feedback)?
            }
            CompressorKind::GaLore => self.galore(&raws, t)?,
            CompressorKind::RandomLowrank => self.random_lowrank(&raws, t)?,
            CompressorKind::TopK { k } => self.sparsified(&raws, t, SparsifyKind::TopK, k)?,
            CompressorKind::RandK { k } => self.sparsified(&raws, t, SparsifyKind::RandK, k)?,
            CompressorKind::None => {
                let g = all_reduce_mean(&raws, &mut self.ledger, CommKind::FullGrad)?;
                (Update::Gradient(g), None)
            }
        };

        match update {
            Update::Gradient(g) => {
                for w in &mut self.workers {
                    w.x = w.optimizer.step(&w.x, &g)?;
                }
            }
            Update::Subspace { p, r } => {
                let zero = DenseMatrix::zeros(r.rows(), r.cols());
                let transposed = self.transposed;
                for w in &mut self.workers {
                    let sub = w.optimizer.step(&zero, &r)?;
                    let lifted = reconstruct(&p, &sub)?;
                    let delta = if transposed { lifted.transpose() } else { lifted };
                    w.x.add_assign(&delta)?;
                }
            }
        }

        if !self.workers[0].x.is_finite() {
            return Err(Error::Divergence { step: t });
        }
        self.t += 1;
        if self.t.is_multiple_of(self.cfg.replica_check_every) || self.t == self.cfg.steps {
            if let Some(bad) = self.workers.iter().position(|w| {
                !(w.x.bit_eq(&self.workers[0].x) && w.optimizer.bit_eq(&self.workers[0].optimizer))
            }) {
                return Err(Error::ReplicaDivergence {
                    step: t,
                    node: bad + 1,
                });
            }
        }
        Ok(StepReport { step: t, contraction })
    }

    /// Loss and `‖∇f‖²` at the current iterate.
    pub fn metrics(&self) -> Result<(f64, f64)> {
        let x = self.x();
        let loss = self.problem.loss(x)?;
        let gn = self.problem.full_grad(x)?.frobenius_norm_sq();
        Ok((loss, gn))
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub traces: Vec<IterationTrace>,
    pub ledger: CommLedger,
    pub steps: usize,
    pub final_x: DenseMatrix,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
}

impl RunResult {
    /// Mean `grad_norm_sq` over the traces of the final `fraction` of steps.
    pub fn tail_mean_grad_norm_sq(&self, fraction: f64) -> f64 {
        let start = self.steps - ((self.steps as f64 * fraction).ceil() as usize).max(1);
        let tail: Vec<f64> = self
            .traces
            .iter()
            .filter(|t| t.step >= start)
            .map(|t| t.grad_norm_sq)
            .collect();
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn comm_per_step(&self) -> f64 {
        self.ledger.average_per_step(self.steps)
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.traces)
    }
}

/// Runs a simulator to completion, emitting a trace every `metrics_every`
/// steps and at the last step.
pub fn run_simulator(mut sim: Simulator) -> Result<RunResult> {
    let steps = sim.config().steps;
    let every = sim.config().metrics_every;
    let mut traces = Vec::with_capacity(steps / every + 1);
    for t in 0..steps {
        let emit = t % every == 0 || t + 1 == steps;
        let before = if emit { Some(sim.metrics()?) } else { None };
        let report = sim.step()?;
        if let Some((loss, grad_norm_sq)) = before {
            if !loss.is_finite() || !grad_norm_sq.is_finite() {
                return Err(Error::Divergence { step: t });
            }
            traces.push(IterationTrace {
                step: t,
                loss,
                grad_norm_sq,
                comm_scalars_cumulative: sim.ledger().scalars_allreduce(),
                contraction_observed: report.contraction,
            });
        }
    }
    let (final_loss, final_grad_norm_sq) = sim.metrics()?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence { step: steps });
    }
    Ok(RunResult {
        traces,
        ledger: sim.ledger().clone(),
        steps,
        final_x: sim.x().clone(),
        final_loss,
        final_grad_norm_sq,
    })
}

pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    run_simulator(Simulator::new(cfg.clone())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::LrSchedule;

    fn msgd(lr: f64, beta: f64) -> OptimizerConfig {
        OptimizerConfig::Msgd {
            lr,
            beta,
            schedule: LrSchedule::Constant,
        }
    }

    fn config(compressor: CompressorKind) -> RunConfig {
        RunConfig {
            n_nodes: 3,
            steps: 40,
            period: 8,
            rank: 2,
            optimizer: msgd(0.1, 0.9),
            compressor,
            problem: ProblemSpec::quadratic(6, 9, 1.0, 0.5, 0.5),
            seed: 11,
            metrics_every: 1,
            replica_check_every: 1,
            parallel: false,
        }
    }

    #[test]
    fn invalid_configs_rejected_before_running() {
        let mut cfg = config(CompressorKind::None);
        cfg.period = 0;
        assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = config(CompressorKind::None);
        cfg.n_nodes = 0;
        assert!(run(&cfg).is_err());
        let cfg = config(CompressorKind::TopK { k: 55 });
        assert!(matches!(run(&cfg), Err(Error::SparsityOutOfRange { .. })));
    }

    #[test]
    fn every_algorithm_runs_and_replicas_agree() {
        let kinds = [
            CompressorKind::greedylore(),
            CompressorKind::GreedyLore {
                selection: Selection::Exact,
                error_feedback: true,
            },
            CompressorKind::LazySvd {
                error_feedback: false,
            },
            CompressorKind::LazySvd {
                error_feedback: true,
            },
            CompressorKind::GaLore,
            CompressorKind::RandomLowrank,
            CompressorKind::TopK { k: 10 },
            CompressorKind::RandK { k: 10 },
            CompressorKind::None,
        ];
        for kind in kinds {
            let res = run(&config(kind)).unwrap();
            assert_eq!(res.traces.len(), 40, "{}", kind.tag());
            assert!(res.final_loss < res.traces[0].loss, "{} did not descend", kind.tag());
        }
    }

    #[test]
    fn tall_problems_are_transposed() {
        let mut cfg = config(CompressorKind::greedylore());
        cfg.problem = ProblemSpec::quadratic(9, 6, 1.0, 0.5, 0.5);
        let sim = Simulator::new(cfg.clone()).unwrap();
        assert_eq!(sim.workers()[0].error.residual().shape(), (6, 9));
        assert_eq!(sim.compressor_state().basis_u().shape(), (6, 6));
        let res = run(&cfg).unwrap();
        assert_eq!(res.final_x.shape(), (9, 6));
        // λ-vector length is min(m, n)
        let lambda_per_step = res.ledger.total_for(CommKind::LambdaVec) / cfg.steps as u64;
        assert_eq!(lambda_per_step, 6);
    }

    #[test]
    fn parallel_and_permuted_compute_match_sequential() {
        let cfg = config(CompressorKind::greedylore());
        let base = run(&cfg).unwrap();
        let mut par = cfg.clone();
        par.parallel = true;
        assert!(run(&par).unwrap().final_x.bit_eq(&base.final_x));

        let mut sim = Simulator::new(cfg).unwrap();
        sim.set_visit_order(vec![2, 0, 1]).unwrap();
        let permuted = run_simulator(sim).unwrap();
        assert!(permuted.final_x.bit_eq(&base.final_x));
        assert_eq!(permuted.trace_csv(), base.trace_csv());
    }

    #[test]
    fn bad_visit_order_rejected() {
        let mut sim = Simulator::new(config(CompressorKind::None)).unwrap();
        assert!(sim.set_visit_order(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let mut cfg = config(CompressorKind::None);
        cfg.optimizer = msgd(50.0, 0.0);
        cfg.steps = 2000;
        match run(&cfg) {
            Err(Error::Divergence { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn greedylore_period_resets_errors() {
        let mut sim = Simulator::new(config(CompressorKind::greedylore())).unwrap();
        for _ in 0..8 {
            sim.step().unwrap();
        }
        assert!(sim.workers().iter().any(|w| !w.error.is_zero()));
        sim.step().unwrap(); // t = 8, period start
        assert!(sim.workers().iter().all(|w| w.error.is_zero()));
    }
}
