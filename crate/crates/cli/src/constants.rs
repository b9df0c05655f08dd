//! Seeds, sample sizes and tolerances used by `check`.
//!
//! Every statistical check compares a Monte-Carlo mean against its target
//! with a slack of `SE_MULTIPLIER` standard errors. Deterministic checks use
//! absolute tolerances on double-precision arithmetic.

/// Slack, in standard errors, for every Monte-Carlo comparison.
pub const SE_MULTIPLIER: f64 = 3.0;

// Linear algebra.
pub const LINALG_SEED: u64 = 0x11;
pub const LINALG_TRIALS: u64 = 200;
pub const PYTHAGORAS_REL_TOL: f64 = 1e-8;
pub const IDEMPOTENCE_TOL: f64 = 1e-10;
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
pub const RECONSTRUCTION_REL_TOL: f64 = 1e-8;

// Deterministic contraction of exact top-r selection.
pub const CONTRACTION_SEED: u64 = 0x21;
pub const CONTRACTION_TRIALS: u64 = 1000;
pub const CONTRACTION_DIMS: [usize; 3] = [4, 16, 64];
/// Fresh `U` every this many trials.
pub const CONTRACTION_BASIS_REUSE: u64 = 25;
pub const CONTRACTION_SLACK: f64 = 1e-12;

// Contraction in expectation of the sketched selection.
pub const EXPECTED_CONTRACTION_SEED: u64 = 0x22;
pub const EXPECTED_CONTRACTION_DRAWS: u64 = 10_000;

// Unbiased sketch values.
pub const SKETCH_SEED: u64 = 0x23;
pub const SKETCH_MATRICES: u64 = 5;
pub const SKETCH_SHAPE: (usize, usize) = (8, 12);
pub const SKETCH_NODES: usize = 4;
pub const SKETCH_DRAWS: u64 = 200_000;

// Ordering of top-k membership probabilities.
pub const ORDERING_SEED: u64 = 0x24;
pub const ORDERING_TRIALS: u64 = 100_000;
pub const ORDERING_SIGMAS: [f64; 5] = [5.0, 4.0, 3.0, 2.0, 1.0];
pub const ORDERING_EXTRA_DIMS: [usize; 3] = [3, 5, 8];

// Error-feedback nullification under a fixed projector.
pub const NULLIFICATION_SEED: u64 = 0x31;
pub const NULLIFICATION_SHAPE: (usize, usize, usize) = (16, 24, 4);
pub const NULLIFICATION_PERIOD: usize = 50;
pub const NULLIFICATION_TOL: f64 = 1e-10;
pub const DECOMPOSITION_TOL: f64 = 1e-12;
pub const ORTHOGONAL_RESIDUAL_TOL: f64 = 1e-10;

// Counterexample with a frozen projector.
pub const COUNTEREXAMPLE_PERIOD: i32 = 20;
pub const COUNTEREXAMPLE_MIN_RATIO: f64 = 0.999999;

// Optimizers.
pub const OPTIM_SEED: u64 = 0x41;
pub const SCALE_LINEARITY_TOL: f64 = 1e-12;

// Communication ledger.
pub const LEDGER_SHAPE: (usize, usize) = (64, 64);
pub const LEDGER_RANK: usize = 8;
pub const LEDGER_PERIOD: usize = 16;
pub const LEDGER_STEPS: usize = 160;

// Convergence runs on the heterogeneous quadratic.
pub const CONVERGENCE_SEED: u64 = 0x51;
pub const CONVERGENCE_DIM: usize = 32;
pub const CONVERGENCE_NODES: usize = 4;
pub const CONVERGENCE_SIGMA: f64 = 1.0;
pub const CONVERGENCE_HETEROGENEITY: f64 = 1.0;
pub const CONVERGENCE_RANK: usize = 4;
pub const CONVERGENCE_PERIOD: usize = 25;
pub const CONVERGENCE_STEPS: usize = 5000;
pub const CONVERGENCE_MSGD_LR: f64 = 0.05;
pub const CONVERGENCE_MSGD_BETA: f64 = 0.9;
pub const CONVERGENCE_ADAM_LR: f64 = 0.005;
/// Compressed tail gradient norm (or final loss) may exceed the uncompressed
/// one by at most this factor.
pub const CONVERGENCE_FACTOR: f64 = 2.0;
pub const TAIL_FRACTION: f64 = 0.1;

// Linear speedup in the noise-dominated regime.
pub const SPEEDUP_SIGMA: f64 = 4.0;
pub const SPEEDUP_NODES: [usize; 3] = [1, 4, 16];
/// Learning rate at N = 1; scaled by √N.
pub const SPEEDUP_BASE_LR: f64 = 0.02;
pub const SPEEDUP_STEPS: usize = 5000;
pub const SPEEDUP_MAX_RATIO: f64 = 0.5;

// Replica and determinism checks.
pub const REPLICA_CHECK_EVERY: usize = 1;
