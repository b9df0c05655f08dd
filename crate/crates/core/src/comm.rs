//! Simulated collectives and the communication ledger.
//!
//! An all-reduce here is an exact mean computed over a fixed pairwise
//! summation tree keyed on node position, so the result never depends on the
//! order in which workers finished. Every call records how many real scalars
//! each node contributed.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommKind {
    /// A full `m × n` gradient.
    FullGrad,
    /// The `r × n` projected representation.
    LowRank,
    /// The length-`m` sketch vector used to pick columns.
    LambdaVec,
    /// Values plus indices of a sparsified gradient.
    Sparse,
}

impl CommKind {
    pub const ALL: [CommKind; 4] = [
        CommKind::FullGrad,
        CommKind::LowRank,
        CommKind::LambdaVec,
        CommKind::Sparse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommKind::FullGrad => "full_grad",
            CommKind::LowRank => "lowrank",
            CommKind::LambdaVec => "lambda_vec",
            CommKind::Sparse => "sparse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    pub step: usize,
    pub kind: CommKind,
    pub count: u64,
}

/// Per-node scalar counts of every collective.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    scalars_allreduce: u64,
    events: Vec<CommEvent>,
    current_step: usize,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_step(&mut self, step: usize) {
        self.current_step = step;
    }

    pub fn record(&mut self, kind: CommKind, count: u64) {
        self.scalars_allreduce += count;
        self.events.push(CommEvent {
            step: self.current_step,
            kind,
            count,
        });
    }

    pub fn scalars_allreduce(&self) -> u64 {
        self.scalars_allreduce
    }

    pub fn events(&self) -> &[CommEvent] {
        &self.events
    }

    pub fn total_for(&self, kind: CommKind) -> u64 {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.count)
            .sum()
    }

    pub fn average_per_step(&self, steps: usize) -> f64 {
        self.scalars_allreduce as f64 / steps as f64
    }

    /// Key-value text summary; the layout is documented in the README.
    pub fn summary_text(&self, steps: usize) -> String {
        let mut out = String::from("[ledger]\n");
        writeln!(out, "steps = {steps}").unwrap();
        for kind in CommKind::ALL {
            writeln!(out, "{} = {}", kind.name(), self.total_for(kind)).unwrap();
        }
        writeln!(out, "total = {}", self.scalars_allreduce).unwrap();
        writeln!(out, "per_step = {}", self.average_per_step(steps)).unwrap();
        out
    }
}

/// Exact mean by pairwise summation over `items[lo..hi]`, split at the midpoint.
pub fn tree_mean(items: &[DenseMatrix]) -> Result<DenseMatrix> {
    let first = items.first().ok_or(Error::EmptyNodes)?;
    for item in items {
        if item.shape() != first.shape() {
            return Err(Error::DimensionMismatch {
                op: "all_reduce",
                left: first.shape(),
                right: item.shape(),
            });
        }
    }
    let mut sum = tree_sum(items);
    sum.scale_in_place(1.0 / items.len() as f64);
    Ok(sum)
}

fn tree_sum(items: &[DenseMatrix]) -> DenseMatrix {
    match items.len() {
        1 => items[0].clone(),
        len => {
            let (lo, hi) = items.split_at(len / 2);
            let mut left = tree_sum(lo);
            left.add_assign(&tree_sum(hi)).expect("shapes checked");
            left
        }
    }
}

/// All-reduce mean that charges one item's worth of scalars to the ledger.
pub fn all_reduce_mean(
    items: &[DenseMatrix],
    ledger: &mut CommLedger,
    kind: CommKind,
) -> Result<DenseMatrix> {
    let mean = tree_mean(items)?;
    ledger.record(kind, mean.len() as u64);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_examples() {
        let mut ledger = CommLedger::new();
        let out = all_reduce_mean(
            &[
                DenseMatrix::from_vec(1, 1, vec![1.0]),
                DenseMatrix::from_vec(1, 1, vec![3.0]),
            ],
            &mut ledger,
            CommKind::FullGrad,
        )
        .unwrap();
        assert_eq!(out.as_slice(), &[2.0]);
        assert_eq!(ledger.scalars_allreduce(), 1);

        let single = DenseMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let out = all_reduce_mean(std::slice::from_ref(&single), &mut ledger, CommKind::FullGrad).unwrap();
        assert!(out.bit_eq(&single));
    }

    #[test]
    fn ledger_counts_shape() {
        let mut ledger = CommLedger::new();
        ledger.begin_step(4);
        let r = DenseMatrix::zeros(3, 7);
        all_reduce_mean(&[r.clone(), r.clone()], &mut ledger, CommKind::LowRank).unwrap();
        assert_eq!(ledger.scalars_allreduce(), 21);
        assert_eq!(
            ledger.events(),
            &[CommEvent {
                step: 4,
                kind: CommKind::LowRank,
                count: 21
            }]
        );
        assert_eq!(ledger.total_for(CommKind::FullGrad), 0);
    }

    #[test]
    fn rejects_mixed_shapes_and_empty() {
        let mut ledger = CommLedger::new();
        let items = [DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 3)];
        assert!(all_reduce_mean(&items, &mut ledger, CommKind::FullGrad).is_err());
        assert_eq!(
            all_reduce_mean(&[], &mut ledger, CommKind::FullGrad),
            Err(Error::EmptyNodes)
        );
        assert_eq!(ledger.scalars_allreduce(), 0);
    }

    #[test]
    fn summary_layout() {
        let mut ledger = CommLedger::new();
        ledger.record(CommKind::FullGrad, 16);
        ledger.record(CommKind::LowRank, 4);
        let text = ledger.summary_text(2);
        assert_eq!(
            text,
            "[ledger]\nsteps = 2\nfull_grad = 16\nlowrank = 4\nlambda_vec = 0\nsparse = 0\ntotal = 20\nper_step = 10\n"
        );
    }
}
