//! Run creation, instance submission, evaluation jobs and run export.

mod extract;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InstanceWarning, Severity, Span};

pub use extract::{extract, ExtractionSpec, FieldMap, InputFile};

/// How many records a dry-run preview shows.
pub const PREVIEW_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
        }
    }

    pub fn can_transition_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!((self, next), (Queued, Running) | (Running, Done) | (Running, Failed))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JobState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "queued" => Ok(JobState::Queued),
            "running" => Ok(JobState::Running),
            "done" => Ok(JobState::Done),
            "failed" => Ok(JobState::Failed),
            other => Err(Error::Config(format!("unknown job state '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationJob {
    pub id: String,
    pub run_id: String,
    pub metrics: Vec<String>,
    pub device_hints: Vec<String>,
    pub state: JobState,
    /// Instance-metric evaluations finished out of the total planned.
    pub progress: Progress,
    pub diagnostics: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedWarning {
    pub index: usize,
    pub warning: InstanceWarning,
}

/// Result of appending instances to a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddOutcome {
    pub count: usize,
    /// Index of the first appended instance.
    pub first_index: usize,
    pub warnings: Vec<IndexedWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestPreview {
    pub count: usize,
    pub records: Vec<crate::model::InstanceDraft>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCounts {
    pub scores_added: usize,
    pub errors_added: usize,
    /// Records that changed nothing because the same content was already
    /// stored for that instance and origin.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedError {
    #[serde(rename = "type")]
    pub error_type: String,
    pub severity: Severity,
    pub span: Span,
    pub explanation: String,
    pub origin: String,
}

/// One line of a run export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub index: usize,
    pub source: Option<String>,
    pub prediction: String,
    pub reference: Option<String>,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub errors: Vec<ExportedError>,
}

/// Parses a run export, one JSON record per line.
pub fn parse_export(text: &str) -> Result<Vec<ExportRecord>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Serializes records as JSON lines.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportOutcome {
    pub instances: usize,
    pub scores: usize,
    pub annotations: usize,
}
