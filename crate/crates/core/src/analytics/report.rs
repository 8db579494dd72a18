use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic mean of component scores in `[0, 1]`: a GroLLA-style macro average.
pub fn grolla(components: &[(String, f64)]) -> Result<f64> {
    if components.is_empty() {
        return Err(Error::Config("GroLLA needs at least one component".into()));
    }
    for (name, v) in components {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Validation(format!("GroLLA component {name} = {v} is outside [0, 1]")));
        }
    }
    Ok(components.iter().map(|(_, v)| v).sum::<f64>() / components.len() as f64)
}

/// Flat metric table plus free-form notes, serialised as JSON and CSV.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
}

/// Metric names that are counts or means of counts rather than rates.
fn is_count(name: &str) -> bool {
    [".count", ".games", ".turns", ".vocabulary_size", ".question_diversity", ".epochs"]
        .iter()
        .any(|s| name.ends_with(s))
}

impl MetricsReport {
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn note(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.notes.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn merge(&mut self, other: MetricsReport) {
        self.metrics.extend(other.metrics);
        self.notes.extend(other.notes);
    }

    /// Every rate lies in `[0, 1]` and every value is finite.
    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.metrics {
            if !v.is_finite() {
                return Err(Error::Invariant(format!("metric {k} is not finite")));
            }
            if !is_count(k) && !(0.0..=1.0).contains(v) {
                return Err(Error::Invariant(format!("rate {k} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Encoding(e.to_string()))
    }

    /// `metric,value` rows, sorted by metric name.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn save(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()? + "\n").map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Per-metric absolute deltas `other - base` over metrics present in all reports.
pub fn compare_reports(reports: &[MetricsReport]) -> Result<Vec<(String, Vec<f64>)>> {
    if reports.len() < 2 {
        return Err(Error::Validation("comparison needs at least two reports".into()));
    }
    let base = &reports[0];
    let shared: Vec<&String> = base
        .metrics
        .keys()
        .filter(|k| reports[1..].iter().all(|r| r.metrics.contains_key(*k)))
        .collect();
    if shared.is_empty() {
        return Err(Error::Validation("reports share no metrics".into()));
    }
    Ok(shared
        .into_iter()
        .map(|k| {
            let b = base.metrics[k];
            (k.clone(), reports[1..].iter().map(|r| r.metrics[k] - b).collect())
        })
        .collect())
}

/// CSV of [`compare_reports`]: `metric,delta_1,...`.
pub fn deltas_csv(deltas: &[(String, Vec<f64>)]) -> String {
    let n = deltas.first().map_or(0, |d| d.1.len());
    let mut out = String::from("metric");
    for k in 1..=n {
        out.push_str(&format!(",delta_{k}"));
    }
    out.push('\n');
    for (name, ds) in deltas {
        out.push_str(name);
        for d in ds {
            out.push_str(&format!(",{d}"));
        }
        out.push('\n');
    }
    out
}
