//! Report documents and their serializations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentKind, Outputs};
use crate::{write_file, RunError, EXIT_FAIL, EXIT_PASS};

/// One pass/fail comparison of a report quantity against a target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub quantity: String,
    /// `"<="`, `">="` or `"~="` (relative).
    pub relation: &'static str,
    pub target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub value: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(quantity: &str, value: f64, target: f64, tolerance: Option<f64>) -> Self {
        Self {
            quantity: quantity.into(),
            relation: "<=",
            target,
            tolerance,
            value,
            passed: value <= target + tolerance.unwrap_or(0.0),
        }
    }

    pub fn at_least(quantity: &str, value: f64, target: f64, tolerance: Option<f64>) -> Self {
        Self {
            quantity: quantity.into(),
            relation: ">=",
            target,
            tolerance,
            value,
            passed: value >= target - tolerance.unwrap_or(0.0),
        }
    }

    pub fn near(quantity: &str, value: f64, target: f64, relative: f64) -> Self {
        Self {
            quantity: quantity.into(),
            relation: "~=",
            target,
            tolerance: Some(relative),
            value,
            passed: (value - target).abs() <= relative * target.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: ExperimentKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub seed: u64,
    pub config_hash: String,
    pub tolerances: BTreeMap<String, f64>,
    pub quantities: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Numerical failure that stopped the experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub notes: Vec<String>,
    pub details: serde_json::Value,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A finished run: the report plus the experiment's CSV table, if it has one.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub csv: Option<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }

    /// Writes the report and CSV to the paths named in the config.
    pub fn write_outputs(&self, outputs: &Outputs) -> Result<(), RunError> {
        if let Some(p) = &outputs.report {
            write_file(p, &self.report.to_json())?;
        }
        if let Some(p) = &outputs.csv {
            self.write_csv(p)?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RunError> {
        let csv = self.csv_or_usage()?;
        write_file(path, csv)
    }

    pub fn csv_or_usage(&self) -> Result<&str, RunError> {
        self.csv.as_deref().ok_or_else(|| {
            RunError::Usage(format!(
                "experiment `{}` has no CSV form",
                self.report.experiment.name()
            ))
        })
    }
}
