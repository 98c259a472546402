//! Domain types shared by every part of the engine.
//!
//! Spans are measured in Unicode scalar values (Rust `char`s) of the
//! prediction text, never bytes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::BleuReport;

pub fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Source and target language codes, lowercased.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source_lang: String,
    pub target_lang: String,
}

impl LanguagePair {
    pub fn new(source: &str, target: &str) -> Result<Self> {
        Ok(LanguagePair {
            source_lang: normalize_lang(source)?,
            target_lang: normalize_lang(target)?,
        })
    }

    /// Parses `"zh-en"` style direction strings; the first hyphen splits
    /// source from target, so subtags are not supported in this form.
    pub fn parse_direction(direction: &str) -> Result<Self> {
        let (src, tgt) = direction
            .split_once(['-', '>', ':'])
            .ok_or_else(|| Error::InvalidLanguageCode(direction.to_string()))?;
        LanguagePair::new(src, tgt.trim_start_matches('>'))
    }
}

/// Accepts `xx`, `xxx` or BCP-47 style `xx-Yyyy-ZZ` codes.
fn normalize_lang(code: &str) -> Result<String> {
    let code = code.trim();
    let mut parts = code.split('-');
    let primary = parts.next().unwrap_or_default();
    let primary_ok = (2..=8).contains(&primary.len()) && primary.chars().all(|c| c.is_ascii_alphabetic());
    let rest_ok = parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()));
    if !primary_ok || !rest_ok {
        return Err(Error::InvalidLanguageCode(code.to_string()));
    }
    Ok(code.to_ascii_lowercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Created,
    Evaluating,
    Ready,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Created => "created",
            RunStatus::Evaluating => "evaluating",
            RunStatus::Ready => "ready",
            RunStatus::Failed => "failed",
        }
    }

    pub fn can_transition_to(self, next: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, next),
            (Created, Evaluating) | (Evaluating, Ready) | (Evaluating, Failed) | (Ready, Evaluating)
        )
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "created" => Ok(RunStatus::Created),
            "evaluating" => Ok(RunStatus::Evaluating),
            "ready" => Ok(RunStatus::Ready),
            "failed" => Ok(RunStatus::Failed),
            other => Err(Error::Config(format!("unknown run status '{other}'"))),
        }
    }
}

/// One submitted translation system output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub id: String,
    pub name: String,
    pub lang: LanguagePair,
    pub created_at: DateTime<Utc>,
    pub requested_metrics: BTreeSet<String>,
    /// Opaque accelerator hints, handed to adapters untouched.
    #[serde(default)]
    pub device_hints: Vec<String>,
    pub status: RunStatus,
    /// Corpus BLEU, present once the `bleu` metric has been evaluated.
    pub bleu: Option<BleuReport>,
    pub instance_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub run_id: String,
    pub index: usize,
    pub source_text: Option<String>,
    pub prediction_text: String,
    pub reference_text: Option<String>,
}

impl Instance {
    pub fn prediction_len(&self) -> usize {
        self.prediction_text.chars().count()
    }
}

/// Instance fields as they arrive from a client, before type checking.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawInstance {
    #[serde(default)]
    pub source: Option<Value>,
    #[serde(default)]
    pub prediction: Option<Value>,
    #[serde(default)]
    pub reference: Option<Value>,
}

/// A validated instance that has not yet been assigned an id or index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDraft {
    pub source: Option<String>,
    pub prediction: String,
    pub reference: Option<String>,
}

impl InstanceDraft {
    pub fn new(source: Option<&str>, prediction: &str, reference: Option<&str>) -> Self {
        InstanceDraft {
            source: source.map(str::to_string),
            prediction: prediction.to_string(),
            reference: reference.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceWarning {
    EmptyPrediction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedInstance {
    pub draft: InstanceDraft,
    pub warnings: Vec<InstanceWarning>,
}

/// Type-checks raw instance fields. Absent or null `source`/`reference` are
/// allowed; `prediction` must be a string, possibly empty.
pub fn check_raw_instance(raw: &RawInstance) -> Result<ValidatedInstance> {
    fn text(field: &str, value: &Option<Value>) -> Result<Option<String>> {
        match value {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(normalize_text(s))),
            Some(_) => Err(Error::NonTextPayload { field: field.to_string() }),
        }
    }
    let source = text("source", &raw.source)?;
    let prediction = text("prediction", &raw.prediction)?
        .ok_or_else(|| Error::NonTextPayload { field: "prediction".to_string() })?;
    let reference = text("reference", &raw.reference)?;
    let warnings = if prediction.is_empty() {
        vec![InstanceWarning::EmptyPrediction]
    } else {
        Vec::new()
    };
    Ok(ValidatedInstance {
        draft: InstanceDraft { source, prediction, reference },
        warnings,
    })
}

fn normalize_text(s: &str) -> String {
    s.strip_prefix('\u{feff}').unwrap_or(s).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Major,
    Minor,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Major => "major",
            Severity::Minor => "minor",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "major" => Ok(Severity::Major),
            "minor" => Ok(Severity::Minor),
            _ => Err(Error::UnknownSeverity(s.to_string())),
        }
    }
}

/// Half-open character range `[start, end)` into a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn check(self, text_len: usize) -> Result<Self> {
        if self.start > self.end || self.end > text_len {
            return Err(Error::InvalidSpan {
                start: self.start,
                end: self.end,
                len: text_len,
            });
        }
        Ok(self)
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    pub id: String,
    pub instance_id: String,
    pub error_type: String,
    pub severity: Severity,
    pub span: Span,
    pub explanation: String,
    pub origin: String,
}

/// Annotation fields before they are checked against an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    #[serde(rename = "type")]
    pub error_type: String,
    pub severity: String,
    /// `None` anchors the error at the end of the prediction.
    #[serde(default)]
    pub span: Option<(usize, usize)>,
    #[serde(default)]
    pub explanation: String,
}

pub fn validate_annotation(raw: &RawAnnotation, instance: &Instance, origin: &str) -> Result<ErrorAnnotation> {
    let severity: Severity = raw.severity.parse()?;
    let len = instance.prediction_len();
    let span = match raw.span {
        Some((start, end)) => Span::new(start, end).check(len)?,
        None => Span::new(len, len),
    };
    Ok(ErrorAnnotation {
        id: new_id(),
        instance_id: instance.id.clone(),
        error_type: raw.error_type.clone(),
        severity,
        span,
        explanation: raw.explanation.clone(),
        origin: origin.to_string(),
    })
}

/// Annotation content produced by an annotator, not yet bound to an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationDraft {
    pub error_type: String,
    pub severity: Severity,
    pub span: Span,
    pub explanation: String,
}

impl AnnotationDraft {
    pub fn bind(self, instance: &Instance, origin: &str) -> Result<ErrorAnnotation> {
        let span = self.span.check(instance.prediction_len())?;
        Ok(ErrorAnnotation {
            id: new_id(),
            instance_id: instance.id.clone(),
            error_type: self.error_type,
            severity: self.severity,
            span,
            explanation: self.explanation,
            origin: origin.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub instance_id: String,
    pub metric: String,
    pub value: f64,
}

impl InstanceScore {
    pub fn new(instance_id: &str, metric: &str, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFiniteScore { metric: metric.to_string() });
        }
        Ok(InstanceScore {
            instance_id: instance_id.to_string(),
            metric: metric.to_string(),
            value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFeedback {
    pub id: String,
    pub group_key: String,
    pub ordering: Vec<String>,
    pub session_id: String,
    pub consented: bool,
    pub created_at: DateTime<Utc>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn instance(pred: &str) -> Instance {
        Instance {
            id: "i0".into(),
            run_id: "r0".into(),
            index: 0,
            source_text: None,
            prediction_text: pred.into(),
            reference_text: Some("ref".into()),
        }
    }

    fn raw(span: Option<(usize, usize)>, severity: &str) -> RawAnnotation {
        RawAnnotation {
            error_type: "missing content".into(),
            severity: severity.into(),
            span,
            explanation: String::new(),
        }
    }

    #[test]
    fn language_codes_are_lowercased() {
        let pair = LanguagePair::new("ZH", "en-US").unwrap();
        assert_eq!(pair.source_lang, "zh");
        assert_eq!(pair.target_lang, "en-us");
        assert!(matches!(LanguagePair::new("", "en"), Err(Error::InvalidLanguageCode(_))));
        assert!(matches!(LanguagePair::new("z1", "en"), Err(Error::InvalidLanguageCode(_))));
        assert_eq!(LanguagePair::parse_direction("zh-en").unwrap(), LanguagePair::new("zh", "en").unwrap());
    }

    #[test]
    fn status_transitions() {
        use RunStatus::*;
        assert!(Created.can_transition_to(Evaluating));
        assert!(Ready.can_transition_to(Evaluating));
        assert!(!Created.can_transition_to(Ready));
        assert!(!Failed.can_transition_to(Evaluating));
        assert!(!Evaluating.can_transition_to(Created));
    }

    #[test]
    fn raw_instance_checks() {
        let ok = check_raw_instance(&RawInstance {
            prediction: Some(json!("Hello")),
            reference: Some(json!("Hello")),
            ..Default::default()
        })
        .unwrap();
        assert!(ok.warnings.is_empty());
        assert_eq!(ok.draft.source, None);

        let empty = check_raw_instance(&RawInstance {
            prediction: Some(json!("")),
            reference: Some(json!("x")),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(empty.warnings, vec![InstanceWarning::EmptyPrediction]);

        let bad = check_raw_instance(&RawInstance {
            prediction: Some(json!(42)),
            ..Default::default()
        });
        assert!(matches!(bad, Err(Error::NonTextPayload { field }) if field == "prediction"));
    }

    #[test]
    fn annotation_spans() {
        let inst = instance("The GNU Project");
        let len = inst.prediction_len();
        let full = validate_annotation(&raw(Some((0, len)), "Major"), &inst, "x").unwrap();
        assert_eq!(full.span, Span::new(0, len));
        assert_eq!(full.severity, Severity::Major);

        let anchor = validate_annotation(&raw(Some((len, len)), "minor"), &inst, "x").unwrap();
        assert!(anchor.span.is_empty());

        let null_span = validate_annotation(&raw(None, "MINOR"), &inst, "x").unwrap();
        assert_eq!(null_span.span, Span::new(len, len));

        assert!(matches!(
            validate_annotation(&raw(Some((3, 2)), "minor"), &inst, "x"),
            Err(Error::InvalidSpan { .. })
        ));
        assert!(matches!(
            validate_annotation(&raw(Some((0, len + 1)), "minor"), &inst, "x"),
            Err(Error::InvalidSpan { .. })
        ));
        assert!(matches!(
            validate_annotation(&raw(Some((0, 1)), "critical"), &inst, "x"),
            Err(Error::UnknownSeverity(_))
        ));
    }

    #[test]
    fn spans_count_chars_not_bytes() {
        let inst = instance("我们走吧");
        assert_eq!(inst.prediction_len(), 4);
        assert!(validate_annotation(&raw(Some((0, 4)), "minor"), &inst, "x").is_ok());
        assert!(validate_annotation(&raw(Some((0, 5)), "minor"), &inst, "x").is_err());
    }

    #[test]
    fn span_serializes_as_pair() {
        assert_eq!(serde_json::to_string(&Span::new(2, 5)).unwrap(), "[2,5]");
        assert_eq!(serde_json::from_str::<Span>("[1,1]").unwrap(), Span::new(1, 1));
    }

    #[test]
    fn scores_must_be_finite() {
        assert!(InstanceScore::new("i", "comet", f64::NAN).is_err());
        assert!(InstanceScore::new("i", "comet", f64::INFINITY).is_err());
        assert!(InstanceScore::new("i", "comet", -3.5).is_ok());
    }
}
