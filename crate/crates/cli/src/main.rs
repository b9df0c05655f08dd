use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use greedylore_cli::plan::{self, ConfigError, Overrides};
use greedylore_cli::{checks, report};

/// Simulated data-parallel training with low-rank gradient compression.
#[derive(Parser)]
#[command(name = "greedylore", version)]
struct Cli {
    /// Override the base seed of every run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the plan's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override a run-config field, e.g. `--set optimizer.lr=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a plan: one trace CSV and ledger per run, plus a summary.
    Run { plan: PathBuf },
    /// Execute a plan and write the runs' loss trajectories side by side.
    Compare { plan: PathBuf },
    /// Run the property suite, or the single property (or AC-n) named.
    Check {
        property: Option<String>,
        /// List property names and exit.
        #[arg(long)]
        list: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        set: cli.set.clone(),
    };
    let outcome = match cli.command {
        Command::Run { plan } => cmd_run(&plan, &overrides),
        Command::Compare { plan } => cmd_compare(&plan, &overrides),
        Command::Check { property, list } => cmd_check(property.as_deref(), list),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<greedylore::Error>() {
            return match err {
                greedylore::Error::Divergence { .. } | greedylore::Error::NonFinite => 3,
                greedylore::Error::InvalidConfig(_) | greedylore::Error::SparsityOutOfRange { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn cmd_run(path: &Path, overrides: &Overrides) -> Result<ExitCode> {
    let plan = plan::load(path, overrides)?;
    let records = report::execute(&plan)?;
    let summary = report::write_run_outputs(&plan.out_dir, &plan.name, &records)?;
    print!("{summary}");
    println!("wrote {} runs to {}", records.len(), plan.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(path: &Path, overrides: &Overrides) -> Result<ExitCode> {
    let plan = plan::load(path, overrides)?;
    let records = report::execute(&plan)?;
    let csv = report::compare_csv(&records)?;
    let summary = report::write_run_outputs(&plan.out_dir, &plan.name, &records)?;
    let target = plan.out_dir.join("compare.csv");
    report::write_atomic(&target, &csv).with_context(|| format!("writing {}", target.display()))?;
    print!("{summary}");
    println!("wrote {}", target.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(filter: Option<&str>, list: bool) -> Result<ExitCode> {
    let Some(selected) = checks::select(filter) else {
        return Err(ConfigError(format!(
            "unknown property `{}`; see `greedylore check --list`",
            filter.unwrap_or_default()
        ))
        .into());
    };
    if list {
        for c in &selected {
            let tag = c.criterion.map(|t| format!(" [{t}]")).unwrap_or_default();
            println!("{}{tag}: {}", c.name, c.about);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let mut failures = 0;
    for c in &selected {
        let start = Instant::now();
        let outcome = (c.run)();
        if !matches!(&outcome, Ok(o) if o.passed) {
            failures += 1;
        }
        println!("{} ({:.2}s)", checks::report_line(c, &outcome), start.elapsed().as_secs_f64());
    }
    println!("{} of {} checks passed", selected.len() - failures, selected.len());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
