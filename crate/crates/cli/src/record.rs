//! Tidy CSV output and run manifests.
//!
//! Every experiment writes rows with the columns
//! `experiment, replicate, method, index, metric, value`. `replicate` is
//! empty for aggregate rows and `index` holds an iteration number or a test
//! point number depending on the metric.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 6] = [
    "experiment",
    "replicate",
    "method",
    "index",
    "metric",
    "value",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub replicate: Option<usize>,
    pub method: String,
    pub index: usize,
    pub metric: String,
    pub value: f64,
}

/// Collects rows for one experiment.
#[derive(Debug, Clone, Default)]
pub struct Table {
    experiment: String,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(experiment: &str) -> Self {
        Table {
            experiment: experiment.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        replicate: Option<usize>,
        method: &str,
        index: usize,
        metric: &str,
        value: f64,
    ) {
        self.rows.push(Row {
            experiment: self.experiment.clone(),
            replicate,
            method: method.to_string(),
            index,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn extend(&mut self, other: Table) {
        self.rows.extend(other.rows);
    }

    /// Values of rows matching `method` and `metric`, in insertion order.
    pub fn values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.as_str(),
                &r.replicate.map(|v| v.to_string()).unwrap_or_default(),
                &r.method,
                &r.index.to_string(),
                &r.metric,
                &r.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything needed to rerun an experiment, written next to its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub crate_version: String,
    pub params: crate::experiments::Params,
    pub outputs: Vec<String>,
    pub rows: usize,
    pub wall_seconds: f64,
    pub notes: Vec<String>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
