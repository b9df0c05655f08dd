use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// An `m × r` matrix with orthonormal columns.
///
/// When the columns were picked out of a larger orthogonal basis,
/// `column_indices` records which ones (0-based, ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    basis: DenseMatrix,
    column_indices: Option<Vec<usize>>,
}

impl Projector {
    /// Wraps a matrix assumed to have orthonormal columns.
    pub fn new(basis: DenseMatrix) -> Self {
        Self {
            basis,
            column_indices: None,
        }
    }

    /// `[U]_{:,J}`; the indices are sorted before selection.
    pub fn from_columns(u: &DenseMatrix, indices: &[usize]) -> Self {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        debug_assert_eq!(idx.len(), indices.len(), "duplicate column indices");
        Self {
            basis: u.select_columns(&idx),
            column_indices: Some(idx),
        }
    }

    /// The first `r` columns of `u`.
    pub fn leading(u: &DenseMatrix, r: usize) -> Self {
        let idx: Vec<usize> = (0..r).collect();
        Self::from_columns(u, &idx)
    }

    pub fn identity(m: usize) -> Self {
        Self::leading(&DenseMatrix::identity(m), m)
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    pub fn column_indices(&self) -> Option<&[usize]> {
        self.column_indices.as_deref()
    }

    pub fn rows(&self) -> usize {
        self.basis.rows()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// A full-rank projector compresses nothing.
    pub fn is_full_rank(&self) -> bool {
        self.rank() >= self.rows()
    }
}

/// `Pᵀ G`, the `r × n` representation that goes over the wire.
pub fn project(p: &Projector, g: &DenseMatrix) -> Result<DenseMatrix> {
    if p.rows() != g.rows() {
        return Err(Error::DimensionMismatch {
            op: "project",
            left: p.basis.shape(),
            right: g.shape(),
        });
    }
    p.basis.t_matmul(g)
}

/// `P R`, lifting a low-rank representation back to `m × n`.
pub fn reconstruct(p: &Projector, r: &DenseMatrix) -> Result<DenseMatrix> {
    if p.rank() != r.rows() {
        return Err(Error::DimensionMismatch {
            op: "reconstruct",
            left: p.basis.shape(),
            right: r.shape(),
        });
    }
    p.basis.matmul(r)
}
