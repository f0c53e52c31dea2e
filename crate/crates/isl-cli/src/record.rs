use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, schema_error, ExperimentId};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The run stopped on a numerical failure; the record holds what finished before it.
    Error,
}

/// A scalar outcome checked against inclusive bounds, or recorded for information when
/// it has none. Non-finite values are stored as null and fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Metric {
    fn new(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let pass = value.is_finite()
            && lower.is_none_or(|lo| value >= lo)
            && upper.is_none_or(|hi| value <= hi);
        Self {
            name: name.into(),
            value: value.is_finite().then_some(value),
            lower,
            upper,
            pass,
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, Some(lo), Some(hi))
    }

    pub fn at_most(name: &str, value: f64, hi: f64) -> Self {
        Self::new(name, value, None, Some(hi))
    }

    pub fn info(name: &str, value: f64) -> Self {
        Self {
            pass: true,
            ..Self::new(name, value, None, None)
        }
    }

    pub fn tolerance(&self) -> String {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => format!("[{lo}, {hi}]"),
            (None, Some(hi)) => format!("<= {hi}"),
            (Some(lo), None) => format!(">= {lo}"),
            (None, None) => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub values: BTreeMap<String, f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: &[(&str, f64)]) -> Self {
        Self {
            label: label.into(),
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: ExperimentId,
    pub config_hash: String,
    /// SHA-256 of this record with the hash itself and the wall-clock time blanked.
    pub record_hash: String,
    pub workers: usize,
    pub seed: u64,
    pub status: Status,
    pub failure: Option<String>,
    /// The first metric is the experiment's key metric.
    pub metrics: Vec<Metric>,
    pub slopes: BTreeMap<String, f64>,
    pub samples: Vec<Sample>,
    /// CSV files written next to record.json.
    pub artifacts: Vec<String>,
    pub wall_clock_s: f64,
}

impl ExperimentRecord {
    pub fn key_metric(&self) -> Option<&Metric> {
        self.metrics.first()
    }

    /// Settles the status and hash once all fields are in place.
    pub fn seal(&mut self) {
        self.status = if self.failure.is_some() {
            Status::Error
        } else if self.metrics.iter().all(|m| m.pass) {
            Status::Pass
        } else {
            Status::Fail
        };
        self.record_hash = self.content_hash();
    }

    pub fn content_hash(&self) -> String {
        let blank = Self {
            record_hash: String::new(),
            wall_clock_s: 0.0,
            ..self.clone()
        };
        hex(&Sha256::digest(
            serde_json::to_vec(&blank).expect("record serializes"),
        ))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| match schema_error(e) {
            CliError::Schema {
                path: field,
                message,
            } => CliError::Schema {
                path: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })
    }
}
