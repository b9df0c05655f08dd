//! Experiment plans: a TOML file with a `[plan]` header, a `[base]` run
//! config, and optionally a `[sweep]` axis and/or `[[runs]]` overrides.
//!
//! Overrides are dotted paths into the run config (`optimizer.lr`,
//! `problem.sigma`, ...). A table that carries a `kind` key replaces the
//! target table instead of merging into it, so switching e.g. the compressor
//! never inherits fields of the previous variant.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use greedylore::RunConfig;
use serde::Deserialize;
use toml::{Table, Value};

/// A plan that cannot be read, parsed or validated. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    plan: Header,
    base: Table,
    sweep: Option<Sweep>,
    #[serde(default)]
    runs: Vec<RunEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    name: String,
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sweep {
    axis: String,
    values: Vec<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunEntry {
    label: String,
    #[serde(default)]
    set: Table,
}

#[derive(Debug, Clone)]
pub struct LabeledRun {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub name: String,
    pub out_dir: PathBuf,
    pub runs: Vec<LabeledRun>,
}

/// Command-line adjustments applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// `key=value` pairs, applied in order to `[base]`.
    pub set: Vec<String>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentPlan, ConfigError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse(&source, overrides).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn parse(source: &str, overrides: &Overrides) -> Result<ExperimentPlan, ConfigError> {
    let file: PlanFile = toml::from_str(source).map_err(|e| config_err(e.to_string().trim_end()))?;
    let mut base = file.base;
    for pair in &overrides.set {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| config_err(format!("--set expects key=value, got `{pair}`")))?;
        set_path(&mut base, key.trim(), parse_scalar(raw.trim()))?;
    }
    if let Some(seed) = overrides.seed {
        set_path(&mut base, "seed", Value::Integer(seed as i64))?;
    }

    let single = file.runs.is_empty();
    let entries: Vec<(String, Table)> = if single {
        vec![(file.plan.name.clone(), Table::new())]
    } else {
        file.runs.into_iter().map(|r| (r.label, r.set)).collect()
    };
    let mut tables = Vec::new();
    for (label, set) in entries {
        let mut table = base.clone();
        merge(&mut table, &set)?;
        match &file.sweep {
            None => tables.push((label, table)),
            Some(sweep) => {
                if sweep.values.is_empty() {
                    return Err(config_err("sweep.values must not be empty"));
                }
                for v in &sweep.values {
                    let mut swept = table.clone();
                    set_path(&mut swept, &sweep.axis, v.clone())?;
                    let tag = format!("{}={}", sweep.axis, display_value(v));
                    let name = if single { tag } else { format!("{label}_{tag}") };
                    tables.push((name, swept));
                }
            }
        }
    }

    let mut seen = HashSet::new();
    let mut runs = Vec::with_capacity(tables.len());
    for (label, table) in tables {
        if !seen.insert(label.clone()) {
            return Err(config_err(format!("duplicate run label `{label}`")));
        }
        let config: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(field_diagnostic(source, &label, e.message())))?;
        config
            .validate()
            .map_err(|e| config_err(format!("run `{label}`: {e}")))?;
        runs.push(LabeledRun { label, config });
    }
    Ok(ExperimentPlan {
        out_dir: overrides
            .out_dir
            .clone()
            .or(file.plan.out_dir)
            .unwrap_or_else(|| PathBuf::from("out").join(&file.plan.name)),
        name: file.plan.name,
        runs,
    })
}

/// Parses an override value as TOML; anything that is not a valid TOML value
/// is taken as a bare string.
pub fn parse_scalar(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad key path `{path}`")));
    }
    let (last, parents) = parts.split_last().expect("nonempty split");
    let mut cur = table;
    for (i, part) in parents.iter().enumerate() {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            config_err(format!("`{}` is not a table", parts[..=i].join(".")))
        })?;
    }
    if *last == "kind" {
        // a new variant starts from a clean table
        cur.clear();
    }
    match (cur.get_mut(*last), value) {
        (Some(Value::Table(existing)), Value::Table(new)) if !new.contains_key("kind") => {
            merge(existing, &new)?;
        }
        (_, value) => {
            cur.insert(last.to_string(), value);
        }
    }
    Ok(())
}

/// Applies every key of `overlay` to `target`; `kind` keys go first so that
/// sibling fields survive a variant switch.
fn merge(target: &mut Table, overlay: &Table) -> Result<(), ConfigError> {
    let mut keys: Vec<&String> = overlay.keys().collect();
    keys.sort_by_key(|k| !(k.as_str() == "kind" || k.ends_with(".kind")));
    for key in keys {
        set_path(target, key, overlay[key].clone())?;
    }
    Ok(())
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Names the offending field and, when the field is written in the file, the
/// line it appears on.
fn field_diagnostic(source: &str, label: &str, message: &str) -> String {
    let field = message.split('`').nth(1);
    let line = field.and_then(|f| {
        source.lines().position(|l| {
            let l = l.trim_start();
            l.strip_prefix(f)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
    });
    match line {
        Some(n) => format!("line {}: run `{label}`: {message}", n + 1),
        None => format!("run `{label}`: {message}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[plan]
name = "demo"

[base]
n_nodes = 2
steps = 20
period = 5
rank = 2
seed = 3

[base.optimizer]
kind = "msgd"
lr = 0.1

[base.compressor]
kind = "greedylore"

[base.problem]
kind = "quadratic"
m = 4
n = 6
sigma = 0.5
"#;

    #[test]
    fn single_run_takes_plan_name() {
        let plan = parse(BASE, &Overrides::default()).unwrap();
        assert_eq!(plan.runs.len(), 1);
        assert_eq!(plan.runs[0].label, "demo");
        assert_eq!(plan.out_dir, PathBuf::from("out/demo"));
        assert_eq!(plan.runs[0].config.problem.sigma, 0.5);
    }

    #[test]
    fn sweep_and_overrides() {
        let src = format!("{BASE}\n[sweep]\naxis = \"n_nodes\"\nvalues = [1, 4]\n");
        let ov = Overrides {
            seed: Some(9),
            out_dir: Some("elsewhere".into()),
            set: vec!["optimizer.lr=0.25".into(), "compressor.kind=top_k".into(), "compressor.k=3".into()],
        };
        let plan = parse(&src, &ov).unwrap();
        let labels: Vec<_> = plan.runs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["n_nodes=1", "n_nodes=4"]);
        let cfg = &plan.runs[1].config;
        assert_eq!(cfg.n_nodes, 4);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.optimizer.lr(), 0.25);
        assert_eq!(cfg.compressor, greedylore::CompressorKind::TopK { k: 3 });
        assert_eq!(plan.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn runs_replace_variant_tables() {
        let src = format!(
            "{BASE}\n[[runs]]\nlabel = \"gl\"\n\n[[runs]]\nlabel = \"lazy\"\nset = {{ compressor = {{ kind = \"lazy_svd\" }}, \"optimizer.lr\" = 0.2 }}\n"
        );
        let plan = parse(&src, &Overrides::default()).unwrap();
        assert_eq!(plan.runs[0].config.compressor, greedylore::CompressorKind::greedylore());
        assert_eq!(
            plan.runs[1].config.compressor,
            greedylore::CompressorKind::LazySvd { error_feedback: false }
        );
        assert_eq!(plan.runs[1].config.optimizer.lr(), 0.2);
    }

    #[test]
    fn unknown_field_reports_line() {
        let src = BASE.replace("rank = 2", "rnak = 2");
        let err = parse(&src, &Overrides::default()).unwrap_err().0;
        assert!(err.starts_with("line 9:"), "{err}");
        assert!(err.contains("rnak"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let src = BASE.replace("steps = 20", "steps = = 20");
        let err = parse(&src, &Overrides::default()).unwrap_err().0;
        assert!(err.contains("line 7"), "{err}");
    }

    #[test]
    fn invalid_values_and_duplicates_rejected() {
        let src = BASE.replace("period = 5", "period = 0");
        assert!(parse(&src, &Overrides::default()).is_err());
        let src = format!("{BASE}\n[[runs]]\nlabel = \"a\"\n[[runs]]\nlabel = \"a\"\n");
        assert!(parse(&src, &Overrides::default()).unwrap_err().0.contains("duplicate"));
        let ov = Overrides {
            set: vec!["novalue".into()],
            ..Default::default()
        };
        assert!(parse(BASE, &ov).is_err());
    }

    #[test]
    fn scalars_parse_as_toml_or_string() {
        assert_eq!(parse_scalar("3"), Value::Integer(3));
        assert_eq!(parse_scalar("0.5"), Value::Float(0.5));
        assert_eq!(parse_scalar("true"), Value::Boolean(true));
        assert_eq!(parse_scalar("galore"), Value::String("galore".into()));
    }
}
