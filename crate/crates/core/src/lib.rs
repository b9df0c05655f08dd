//! Deterministic simulator of data-parallel training with greedy low-rank
//! gradient compression (error feedback, semi-lazy SVD, approximate global
//! top-r column selection) and the usual baselines.

pub mod cluster;
pub mod comm;
pub mod compressors;
pub mod error;
pub mod feedback;
pub mod matrix;
pub mod optim;
pub mod problems;
pub mod projector;
pub mod rng;
pub mod svd;
pub mod trace;

pub use cluster::{run, run_simulator, RunConfig, RunResult, Simulator};
pub use comm::{all_reduce_mean, CommKind, CommLedger};
pub use compressors::{CompressorKind, CompressorState, Selection};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use optim::{AdamMode, OptimizerConfig};
pub use problems::{Problem, ProblemKind, ProblemSpec};
pub use projector::Projector;
pub use rng::{RngStream, StreamKey};
pub use trace::{trace_csv, IterationTrace, TRACE_HEADER};
