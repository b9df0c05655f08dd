use std::fmt::Write as _;

/// Metrics for one emitted step. `loss` and `grad_norm_sq` are evaluated at
/// `X_t`, before that step's update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub step: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    /// Per-node scalars communicated through the end of this step.
    pub comm_scalars_cumulative: u64,
    /// `‖Ĝ_t − G_t‖² / ‖G_t‖²` when the step compressed anything.
    pub contraction_observed: Option<f64>,
}

pub const TRACE_HEADER: &str = "step,loss,grad_norm_sq,comm_scalars,contraction";

/// Renders traces as CSV. Floats use shortest round-trip scientific notation
/// (`{:e}`); an absent contraction is an empty field.
pub fn trace_csv(traces: &[IterationTrace]) -> String {
    let mut out = String::with_capacity(64 * (traces.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        write!(
            out,
            "{},{:e},{:e},{},",
            t.step, t.loss, t.grad_norm_sq, t.comm_scalars_cumulative
        )
        .unwrap();
        if let Some(c) = t.contraction_observed {
            write!(out, "{c:e}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let traces = [
            IterationTrace {
                step: 0,
                loss: 1.5,
                grad_norm_sq: 0.25,
                comm_scalars_cumulative: 16,
                contraction_observed: Some(0.0),
            },
            IterationTrace {
                step: 1,
                loss: 0.1,
                grad_norm_sq: 1e-20,
                comm_scalars_cumulative: 24,
                contraction_observed: None,
            },
        ];
        assert_eq!(
            trace_csv(&traces),
            "step,loss,grad_norm_sq,comm_scalars,contraction\n0,1.5e0,2.5e-1,16,0e0\n1,1e-1,1e-20,24,\n"
        );
    }
}
