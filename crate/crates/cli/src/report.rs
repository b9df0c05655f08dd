//! Executing plans and writing their outputs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use anyhow::{bail, Context, Result};
use greedylore::{run, RunConfig, RunResult};
use rayon::prelude::*;

use crate::constants::TAIL_FRACTION;
use crate::plan::{ExperimentPlan, LabeledRun};

pub struct RunRecord {
    pub label: String,
    pub config: RunConfig,
    pub result: RunResult,
}

/// Runs every entry of the plan; independent runs execute on the rayon pool.
/// Results come back in plan order.
pub fn execute(plan: &ExperimentPlan) -> Result<Vec<RunRecord>> {
    plan.runs
        .par_iter()
        .map(|LabeledRun { label, config }| {
            let result = run(config).with_context(|| format!("run `{label}`"))?;
            Ok(RunRecord {
                label: label.clone(),
                config: config.clone(),
                result,
            })
        })
        .collect()
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Per-step communication averages are only meaningful over whole periods.
pub fn period_warning(label: &str, cfg: &RunConfig) -> Option<String> {
    (cfg.compressor.is_low_rank() && !cfg.steps.is_multiple_of(cfg.period)).then(|| {
        format!(
            "warning: run `{label}`: period {} does not divide steps {}; comm_per_step is not a whole-period average",
            cfg.period, cfg.steps
        )
    })
}

pub const SUMMARY_HEADER: &str =
    "label,compressor,n_nodes,steps,final_loss,tail_grad_norm_sq,comm_total,comm_per_step";

pub fn summary_text(plan_name: &str, records: &[RunRecord]) -> String {
    let mut out = format!("# plan {plan_name}\n{SUMMARY_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{:e},{:e},{},{}",
            r.label,
            r.config.compressor.tag(),
            r.config.n_nodes,
            r.config.steps,
            r.result.final_loss,
            r.result.tail_mean_grad_norm_sq(TAIL_FRACTION),
            r.result.ledger.scalars_allreduce(),
            r.result.comm_per_step()
        )
        .unwrap();
    }
    for r in records {
        if let Some(w) = period_warning(&r.label, &r.config) {
            writeln!(out, "{w}").unwrap();
        }
    }
    out
}

/// Writes `<label>.csv`, `<label>.ledger` and `summary` into the output
/// directory; returns the summary text.
pub fn write_run_outputs(dir: &Path, plan_name: &str, records: &[RunRecord]) -> Result<String> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in records {
        write_atomic(&dir.join(format!("{}.csv", r.label)), &r.result.trace_csv())?;
        let ledger = r.result.ledger.summary_text(r.result.steps);
        write_atomic(&dir.join(format!("{}.ledger", r.label)), &ledger)?;
    }
    let summary = summary_text(plan_name, records);
    write_atomic(&dir.join("summary"), &summary)?;
    Ok(summary)
}

/// Side-by-side loss trajectories. For each run `<label>_loss` and
/// `<label>_comm_rel`, the cumulative scalars sent so far divided by what
/// uncompressed training would have sent (`m·n` per step).
pub fn compare_csv(records: &[RunRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        bail!("nothing to compare");
    };
    let steps: Vec<usize> = first.result.traces.iter().map(|t| t.step).collect();
    for r in records {
        let other: Vec<usize> = r.result.traces.iter().map(|t| t.step).collect();
        if other != steps {
            bail!(crate::plan::ConfigError(format!(
                "run `{}` emits traces at different steps than `{}`; use equal steps and metrics_every",
                r.label, first.label
            )));
        }
    }
    let mut out = String::from("step");
    for r in records {
        write!(out, ",{0}_loss,{0}_comm_rel", r.label).unwrap();
    }
    out.push('\n');
    for (row, step) in steps.iter().enumerate() {
        write!(out, "{step}").unwrap();
        for r in records {
            let t = &r.result.traces[row];
            let (m, n) = r.config.problem.shape();
            let full = (m * n * (step + 1)) as f64;
            write!(out, ",{:e},{:e}", t.loss, t.comm_scalars_cumulative as f64 / full).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
