use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::projector::Projector;

/// Per-node residual `E_t^{(i)}`: whatever compression dropped, carried into
/// the next step.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBuffer {
    e: DenseMatrix,
}

impl ErrorBuffer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            e: DenseMatrix::zeros(rows, cols),
        }
    }

    pub fn residual(&self) -> &DenseMatrix {
        &self.e
    }

    pub fn is_zero(&self) -> bool {
        self.e.as_slice().iter().all(|v| *v == 0.0)
    }

    /// `raw_grad + E`.
    pub fn inject(&self, raw_grad: &DenseMatrix) -> Result<DenseMatrix> {
        raw_grad.add(&self.e)
    }

    pub fn reset(&mut self) {
        self.e.fill(0.0);
    }

    /// `E := g_with_error − P·r_local`, or zero on a period start.
    pub fn update(
        &mut self,
        g_with_error: &DenseMatrix,
        p: &Projector,
        r_local: &DenseMatrix,
        t: usize,
        period: usize,
    ) -> Result<()> {
        if g_with_error.shape() != self.e.shape() {
            return Err(Error::DimensionMismatch {
                op: "error_update",
                left: self.e.shape(),
                right: g_with_error.shape(),
            });
        }
        if t.is_multiple_of(period) || p.is_full_rank() {
            self.reset();
            return Ok(());
        }
        let sent = p.basis().matmul(r_local)?;
        self.e = g_with_error.sub(&sent)?;
        Ok(())
    }

    /// `E := g_with_error − sent` for compressors that are not projections.
    pub fn set_residual(&mut self, g_with_error: &DenseMatrix, sent: &DenseMatrix) -> Result<()> {
        self.e = g_with_error.sub(sent)?;
        Ok(())
    }
}
