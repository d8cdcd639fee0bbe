//! Manifest-driven evaluation runs, report emission and the rating log
//! that backs the expert rating service.

mod canonical;
mod manifest;
pub mod rating;
mod report;
mod run;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::AgreementError;
use crate::graph::{EntityGraph, GraphError};
use crate::prompt::PromptError;
use crate::score::F1Breakdown;

pub use canonical::canonical_json;
pub use manifest::{load_manifest, parse_manifest, MsSsimGrouping, RunManifest, RunOptions, SampleSpec};
pub use report::{emit_report, parse_report_csv, ReportFormat};
pub use run::{run_evaluation, RunResults, RunSummary, SampleError};

/// Process exit codes of the command-line tool.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const PARTIAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {id:?}: {source}")]
    Prompt {
        id: String,
        #[source]
        source: PromptError,
    },
    #[error("lexicon: {0}")]
    Lexicon(#[from] GraphError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error("nothing to report")]
    EmptyResults,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}

/// Intermediate artifacts of RadGraph-F1 scoring, kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreAudit {
    pub retained_sentences: Vec<String>,
    pub pred_graph: EntityGraph,
    pub gt_graph: EntityGraph,
}

/// Per-sample metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub finding: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_breakdown: Option<F1Breakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_mean: Option<f64>,
    /// Input paths by role, plus `error` when some stage failed.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<ScoreAudit>,
}

impl ScoreRecord {
    pub fn new(sample_id: &str, finding: &str, prompt: &str) -> Self {
        ScoreRecord {
            sample_id: sample_id.to_string(),
            finding: finding.to_string(),
            prompt: prompt.to_string(),
            f1_breakdown: None,
            alignment: None,
            expert_mean: None,
            provenance: BTreeMap::new(),
            audit: None,
        }
    }

    pub fn has_metric(&self) -> bool {
        self.f1_breakdown.is_some() || self.alignment.is_some() || self.expert_mean.is_some()
    }

    pub fn error(&self) -> Option<&str> {
        self.provenance.get("error").map(String::as_str)
    }
}

/// Parses score records written one JSON object per line.
pub fn read_score_records(bytes: &[u8]) -> Result<Vec<ScoreRecord>, HarnessError> {
    String::from_utf8_lossy(bytes)
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Schema(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// One record per line, canonical key order.
pub fn write_score_records(records: &[ScoreRecord]) -> String {
    records
        .iter()
        .map(|r| canonical::canonical_json_compact(r) + "\n")
        .collect()
}
