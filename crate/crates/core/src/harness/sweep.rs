use std::fs;
use std::path::Path;

use serde::Serialize;
use toml::{Table, Value};

use super::config::ExperimentConfig;
use super::run::{area_under_curve, run_experiment, write_rows, ExperimentReport};
use crate::error::{Error, Result};
use crate::tabular::final_fraction_mean;

/// A base config plus a `[grid]` table of value lists. Every combination
/// in the cartesian product is run as its own experiment; `algorithm` and
/// `model` are valid grid keys next to the usual overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub base: ExperimentConfig,
    pub axes: Vec<(String, Vec<Value>)>,
}

impl GridSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: Table = toml::from_str(text)?;
        let grid = match table.remove("grid") {
            Some(Value::Table(g)) => g,
            Some(_) => return Err(Error::Config("`grid` must be a table".into())),
            None => Table::new(),
        };
        let base = ExperimentConfig::from_table(table)?;
        let axes = grid
            .into_iter()
            .map(|(k, v)| match v {
                Value::Array(vs) if !vs.is_empty() => Ok((k, vs)),
                _ => Err(Error::Config(format!("grid entry `{k}` must be a non-empty array"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base, axes })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// One config per grid point, named `<base>/<key>-<value>_...`.
    pub fn expand(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        let mut points: Vec<Vec<(&str, &Value)>> = vec![Vec::new()];
        for (k, vs) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    vs.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((k.as_str(), v));
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|p| {
                let mut cfg = self.base.clone();
                for (k, v) in &p {
                    cfg.apply_override(k, v)?;
                }
                let label = if p.is_empty() {
                    "base".to_string()
                } else {
                    p.iter()
                        .map(|(k, v)| format!("{k}-{}", value_label(v)))
                        .collect::<Vec<_>>()
                        .join("_")
                };
                cfg.name = format!("{}/{}", self.base.name, label);
                Ok((label, cfg))
            })
            .collect()
    }
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(value_label).collect::<Vec<_>>().join("x"),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub algorithm: String,
    pub env: String,
    pub seeds_completed: usize,
    /// Mean over the last 20% of the seed-averaged curve.
    pub final_mean: f64,
    pub auc: f64,
}

pub fn sweep_row(label: &str, cfg: &ExperimentConfig, report: &ExperimentReport) -> SweepRow {
    let curve: Vec<f64> = report.summary.iter().map(|r| r.mean).collect();
    SweepRow {
        label: label.to_string(),
        algorithm: cfg.algorithm_tag().to_string(),
        env: cfg.env.tag().to_string(),
        seeds_completed: report.completed().count(),
        final_mean: if curve.is_empty() {
            f64::NAN
        } else {
            final_fraction_mean(&curve, 0.2)
        },
        auc: area_under_curve(&curve),
    }
}

/// Best row per algorithm by final mean; earlier rows win ties and NaN
/// rows never win.
pub fn best_per_algorithm(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut best: Vec<SweepRow> = Vec::new();
    for r in rows.iter().filter(|r| !r.final_mean.is_nan()) {
        match best.iter_mut().find(|b| b.algorithm == r.algorithm) {
            Some(b) if r.final_mean > b.final_mean => *b = r.clone(),
            Some(_) => {}
            None => best.push(r.clone()),
        }
    }
    best
}

/// Run every grid point. With `out`, each point writes its usual experiment
/// directory and the sweep writes `sweep_summary.csv` and `best.csv` under
/// `<out>/<base name>/`.
pub fn run_grid(spec: &GridSpec, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (label, cfg) in spec.expand()? {
        let report = run_experiment(&cfg, out)?;
        rows.push(sweep_row(&label, &cfg, &report));
    }
    if let Some(o) = out {
        let d = o.join(&spec.base.name);
        fs::create_dir_all(&d)?;
        write_rows(&d.join("sweep_summary.csv"), rows.iter())?;
        write_rows(&d.join("best.csv"), best_per_algorithm(&rows).iter())?;
    }
    Ok(rows)
}
