//! Experiment configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use divflow::diagnostics::{HopfOptions, RecurrenceOptions};
use divflow::flow::FlowTolerances;
use divflow::measure::{Method, Region};
use divflow::potential::PhiProfile;
use divflow::zoo::ZooParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FiberLemma,
    PathIntegral,
    Fubini,
    Volume,
    DivergenceIntegral,
    Karp,
    Cutoff,
    FxLadder,
    Decay,
    Recurrence,
    Hopf,
    PotentialMonotone,
    PotentialLaplacian,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::FiberLemma => "fiber-lemma",
            Self::PathIntegral => "path-integral",
            Self::Fubini => "fubini",
            Self::Volume => "volume",
            Self::DivergenceIntegral => "divergence-integral",
            Self::Karp => "karp",
            Self::Cutoff => "cutoff",
            Self::FxLadder => "fx-ladder",
            Self::Decay => "decay",
            Self::Recurrence => "recurrence",
            Self::Hopf => "hopf",
            Self::PotentialMonotone => "potential-monotone",
            Self::PotentialLaplacian => "potential-laplacian",
        }
    }

    /// Kinds that evaluate a vector field.
    pub fn needs_field(self) -> bool {
        matches!(
            self,
            Self::FiberLemma
                | Self::PathIntegral
                | Self::Fubini
                | Self::DivergenceIntegral
                | Self::Karp
                | Self::Cutoff
                | Self::FxLadder
                | Self::Decay
        )
    }

    pub fn needs_manifold(self) -> bool {
        self != Self::PotentialMonotone
    }
}

/// Geometric truncation ladder `R_k = r0·2^k`, `k = 0..=levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub r0: f64,
    pub levels: usize,
}

/// Bounds on a named report quantity.
///
/// `value` is compared with the quantity's tolerance as a relative error;
/// `min` and `max` use it as an absolute slack.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

/// One experiment. Every optional knob falls back to a per-kind default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub params: ZooParams,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub expect: BTreeMap<String, Expectation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_radius: Option<f64>,
    /// Orbit length for path identities; half-length `s` of the endpoint bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Ladder>,
    /// Replaces the truncation ladder by a bounded region.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    /// `[nodes]` for a circle fiber, `[polar, azimuth]` for a sphere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fiber_nodes: Option<Vec<usize>>,
    pub flow: FlowTolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recurrence: Option<RecurrenceOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hopf: Option<HopfOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<PhiProfile>>,
    pub output: Outputs,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Usage(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical serialization; formatting and key order in
    /// the source file do not affect it.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn kind(&self) -> Result<ExperimentKind, RunError> {
        self.experiment
            .ok_or_else(|| RunError::Usage("config names no experiment".into()))
    }
}
