use crate::search::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine reports. [`Error::code`] gives the stable
/// machine-readable name used by the HTTP API and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown run '{0}'")]
    UnknownRun(String),
    #[error("unknown instance {selector}{}", record_suffix(*.record))]
    UnknownInstance {
        selector: String,
        record: Option<usize>,
    },
    #[error("field '{field}' is not text")]
    NonTextPayload { field: String },
    #[error("invalid span ({start}, {end}) for prediction of length {len}")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("unknown severity '{0}' (expected 'major' or 'minor')")]
    UnknownSeverity(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("missing reference for instance(s) {}", join_indices(.indices))]
    MissingReference { indices: Vec<usize> },
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("no adapter configured for metric '{0}'")]
    AdapterMissing(String),
    #[error("adapter for '{metric}' failed: {diagnostics}")]
    AdapterFailed { metric: String, diagnostics: String },
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("invalid language code '{0}'")]
    InvalidLanguageCode(String),
    #[error("line counts differ: {}", format_counts(.counts))]
    LineCountMismatch { counts: Vec<(String, usize)> },
    #[error("record {record} lacks field '{field}'")]
    FieldMissing { record: usize, field: String },
    #[error("line {line} does not match the record pattern")]
    PatternNoMatch { line: usize },
    #[error("invalid extraction spec: {0}")]
    InvalidSpec(String),
    #[error("run has no instances")]
    EmptyRun,
    #[error("{kind} '{id}' not found")]
    NotFound { kind: &'static str, id: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid page: {0}")]
    InvalidPage(String),
    #[error("bin count must be at least 1")]
    InvalidBinCount,
    #[error("invalid histogram range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("score for metric '{metric}' is not finite")]
    NonFiniteScore { metric: String },
    #[error("ordering is not a permutation of the group's runs")]
    NotAPermutation,
    #[error("unknown group '{0}'")]
    UnknownGroup(String),
    #[error("run status cannot change from {from} to {to}")]
    InvalidTransition { from: String, to: String },
    #[error("run '{0}' already has an active evaluation job")]
    RunBusy(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("storage error: {0}")]
    Storage(#[from] rusqlite::Error),
    #[error("storage schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: String, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownRun(_) => "UnknownRun",
            Error::UnknownInstance { .. } => "UnknownInstance",
            Error::NonTextPayload { .. } => "NonTextPayload",
            Error::InvalidSpan { .. } => "InvalidSpan",
            Error::UnknownSeverity(_) => "UnknownSeverity",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::MissingReference { .. } => "MissingReference",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::AdapterMissing(_) => "AdapterMissing",
            Error::AdapterFailed { .. } => "AdapterFailed",
            Error::UnknownMetric(_) => "UnknownMetric",
            Error::InvalidLanguageCode(_) => "InvalidLanguageCode",
            Error::LineCountMismatch { .. } => "LineCountMismatch",
            Error::FieldMissing { .. } => "FieldMissing",
            Error::PatternNoMatch { .. } => "PatternNoMatch",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::EmptyRun => "EmptyRun",
            Error::NotFound { .. } => "NotFound",
            Error::Parse(_) => "ParseError",
            Error::InvalidPage(_) => "InvalidPage",
            Error::InvalidBinCount => "InvalidBinCount",
            Error::InvalidRange { .. } => "InvalidRange",
            Error::NonFiniteScore { .. } => "NonFiniteScore",
            Error::NotAPermutation => "NotAPermutation",
            Error::UnknownGroup(_) => "UnknownGroup",
            Error::InvalidTransition { .. } => "InvalidTransition",
            Error::RunBusy(_) => "RunBusy",
            Error::Config(_) => "ConfigError",
            Error::Storage(_) | Error::SchemaVersion { .. } => "StorageError",
            Error::Io(_) => "IoError",
        }
    }

    /// Structured fields for machine consumers; `null` when the message says
    /// everything.
    pub fn details(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Error::UnknownRun(id) => json!({ "run_id": id }),
            Error::UnknownInstance { selector, record } => json!({ "selector": selector, "record": record }),
            Error::NonTextPayload { field } => json!({ "field": field }),
            Error::InvalidSpan { start, end, len } => json!({ "start": start, "end": end, "len": len }),
            Error::UnknownSeverity(s) => json!({ "severity": s }),
            Error::MissingReference { indices } => json!({ "indices": indices }),
            Error::MalformedRecord { line, message } => json!({ "line": line, "message": message }),
            Error::AdapterMissing(m) | Error::UnknownMetric(m) => json!({ "metric": m }),
            Error::AdapterFailed { metric, diagnostics } => json!({ "metric": metric, "diagnostics": diagnostics }),
            Error::InvalidLanguageCode(c) => json!({ "code": c }),
            Error::LineCountMismatch { counts } => {
                json!({ "counts": counts.iter().map(|(r, n)| json!({ "role": r, "lines": n })).collect::<Vec<_>>() })
            }
            Error::FieldMissing { record, field } => json!({ "record": record, "field": field }),
            Error::PatternNoMatch { line } => json!({ "line": line }),
            Error::NotFound { kind, id } => json!({ "kind": kind, "id": id }),
            Error::Parse(e) => json!({ "position": e.position }),
            Error::InvalidRange { lo, hi } => json!({ "lo": lo, "hi": hi }),
            Error::NonFiniteScore { metric } => json!({ "metric": metric }),
            Error::UnknownGroup(key) => json!({ "group_key": key }),
            Error::InvalidTransition { from, to } => json!({ "from": from, "to": to }),
            Error::RunBusy(id) => json!({ "run_id": id }),
            _ => serde_json::Value::Null,
        }
    }

    /// Coarse classification used to pick HTTP status codes and CLI exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::UnknownRun(_)
            | Error::UnknownInstance { .. }
            | Error::NotFound { .. }
            | Error::UnknownGroup(_) => ErrorKind::NotFound,
            Error::RunBusy(_) | Error::InvalidTransition { .. } => ErrorKind::Conflict,
            Error::AdapterFailed { .. } | Error::Storage(_) | Error::SchemaVersion { .. } | Error::Io(_) => {
                ErrorKind::Internal
            }
            _ => ErrorKind::Invalid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    NotFound,
    Conflict,
    Internal,
}

fn record_suffix(record: Option<usize>) -> String {
    match record {
        Some(r) => format!(" (record {r})"),
        None => String::new(),
    }
}

fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn format_counts(counts: &[(String, usize)]) -> String {
    counts
        .iter()
        .map(|(role, n)| format!("{role}={n}"))
        .collect::<Vec<_>>()
        .join(", ")
}
