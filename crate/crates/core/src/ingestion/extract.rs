//! Declarative extraction of instances from uploaded text files.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::InstanceDraft;

/// Maps instance roles to mode-specific locators (JSON keys, column
/// numbers, file positions or capture-group names).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<T>,
    pub prediction: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<T>,
}

impl<T> FieldMap<T> {
    fn roles(&self) -> impl Iterator<Item = (&'static str, &T)> {
        [
            ("source", self.source.as_ref()),
            ("prediction", Some(&self.prediction)),
            ("reference", self.reference.as_ref()),
        ]
        .into_iter()
        .filter_map(|(role, v)| v.map(|v| (role, v)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExtractionSpec {
    /// One JSON object per line; `fields` names the keys.
    JsonlFields { fields: FieldMap<String> },
    /// Tab-separated, no quoting; `columns` are 0-based.
    TsvColumns {
        columns: FieldMap<usize>,
        #[serde(default)]
        header: bool,
    },
    /// Line-aligned files; `files` gives each role's position in the upload.
    ParallelFiles { files: FieldMap<usize> },
    /// One record per line matched by `pattern`. Without `fields` the
    /// capture groups must be named `source`, `prediction`, `reference`.
    RegexRecord {
        pattern: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fields: Option<FieldMap<String>>,
    },
}

impl ExtractionSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn check(&self) -> Result<()> {
        if let ExtractionSpec::RegexRecord { .. } = self {
            self.compiled_regex()?;
        }
        Ok(())
    }

    fn compiled_regex(&self) -> Result<(Regex, FieldMap<String>)> {
        let ExtractionSpec::RegexRecord { pattern, fields } = self else {
            unreachable!("only called for regex_record")
        };
        let re = Regex::new(pattern).map_err(|e| Error::InvalidSpec(format!("bad pattern: {e}")))?;
        let names: Vec<&str> = re.capture_names().flatten().collect();
        let fields = match fields {
            Some(f) => f.clone(),
            None => {
                let has = |n: &str| names.contains(&n).then(|| n.to_string());
                FieldMap {
                    source: has("source"),
                    prediction: has("prediction").ok_or_else(|| {
                        Error::InvalidSpec("pattern needs a named group 'prediction'".into())
                    })?,
                    reference: has("reference"),
                }
            }
        };
        for (role, group) in fields.roles() {
            if !names.contains(&group.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "pattern has no named group '{group}' for {role}"
                )));
            }
        }
        Ok((re, fields))
    }
}

/// An uploaded file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl InputFile {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        InputFile {
            name: name.into(),
            bytes: bytes.into(),
        }
    }

    fn text(&self) -> Result<&str> {
        let text = std::str::from_utf8(&self.bytes).map_err(|_| Error::NonTextPayload {
            field: self.name.clone(),
        })?;
        Ok(text.strip_prefix('\u{feff}').unwrap_or(text))
    }
}

/// Lines without terminators; a final newline does not start a new line.
fn lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect()
}

/// Extracts instance drafts from `files` in file order.
pub fn extract(spec: &ExtractionSpec, files: &[InputFile]) -> Result<Vec<InstanceDraft>> {
    if files.is_empty() {
        return Err(Error::InvalidSpec("no files given".into()));
    }
    match spec {
        ExtractionSpec::JsonlFields { fields } => extract_jsonl(fields, files),
        ExtractionSpec::TsvColumns { columns, header } => extract_tsv(columns, *header, files),
        ExtractionSpec::ParallelFiles { files: roles } => extract_parallel(roles, files),
        ExtractionSpec::RegexRecord { .. } => {
            let (re, fields) = spec.compiled_regex()?;
            extract_regex(&re, &fields, files)
        }
    }
}

fn extract_jsonl(fields: &FieldMap<String>, files: &[InputFile]) -> Result<Vec<InstanceDraft>> {
    let mut out = Vec::new();
    for file in files {
        for (i, line) in lines(file.text()?).into_iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = out.len() + 1;
            let obj: Value = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
            let get = |role: &str, key: &String| -> Result<Option<String>> {
                match obj.get(key) {
                    None => Err(Error::FieldMissing {
                        record,
                        field: key.clone(),
                    }),
                    Some(Value::Null) if role != "prediction" => Ok(None),
                    Some(Value::String(s)) => Ok(Some(s.clone())),
                    Some(_) => Err(Error::NonTextPayload {
                        field: format!("{key} (record {record})"),
                    }),
                }
            };
            out.push(InstanceDraft {
                source: fields.source.as_ref().map(|k| get("source", k)).transpose()?.flatten(),
                prediction: get("prediction", &fields.prediction)?.unwrap_or_default(),
                reference: fields.reference.as_ref().map(|k| get("reference", k)).transpose()?.flatten(),
            });
        }
    }
    Ok(out)
}

fn extract_tsv(columns: &FieldMap<usize>, header: bool, files: &[InputFile]) -> Result<Vec<InstanceDraft>> {
    let mut out = Vec::new();
    for file in files {
        let lines = lines(file.text()?);
        for line in lines.into_iter().skip(usize::from(header)) {
            if line.trim().is_empty() {
                continue;
            }
            let record = out.len() + 1;
            let cells: Vec<&str> = line.split('\t').collect();
            let get = |role: &str, col: usize| -> Result<String> {
                cells.get(col).map(|c| c.to_string()).ok_or_else(|| Error::FieldMissing {
                    record,
                    field: format!("{role} (column {col})"),
                })
            };
            out.push(InstanceDraft {
                source: columns.source.map(|c| get("source", c)).transpose()?,
                prediction: get("prediction", columns.prediction)?,
                reference: columns.reference.map(|c| get("reference", c)).transpose()?,
            });
        }
    }
    Ok(out)
}

fn extract_parallel(roles: &FieldMap<usize>, files: &[InputFile]) -> Result<Vec<InstanceDraft>> {
    let mut columns: BTreeMap<&'static str, Vec<&str>> = BTreeMap::new();
    let mut counts = Vec::new();
    for (role, &pos) in roles.roles() {
        let file = files.get(pos).ok_or_else(|| {
            Error::InvalidSpec(format!("{role} refers to file {pos}, but only {} were given", files.len()))
        })?;
        let lines = lines(file.text()?);
        counts.push((role.to_string(), lines.len()));
        columns.insert(role, lines);
    }
    if counts.windows(2).any(|w| w[0].1 != w[1].1) {
        return Err(Error::LineCountMismatch { counts });
    }
    let n = counts[0].1;
    let line = |role: &str, i: usize| columns.get(role).map(|l| l[i].to_string());
    Ok((0..n)
        .map(|i| InstanceDraft {
            source: line("source", i),
            prediction: line("prediction", i).unwrap_or_default(),
            reference: line("reference", i),
        })
        .collect())
}

fn extract_regex(re: &Regex, fields: &FieldMap<String>, files: &[InputFile]) -> Result<Vec<InstanceDraft>> {
    let mut out = Vec::new();
    for file in files {
        for (i, line) in lines(file.text()?).into_iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let caps = re.captures(line).ok_or(Error::PatternNoMatch { line: i + 1 })?;
            let record = out.len() + 1;
            let group = |name: &String| caps.name(name).map(|m| m.as_str().to_string());
            out.push(InstanceDraft {
                source: fields.source.as_ref().and_then(group),
                prediction: group(&fields.prediction).ok_or_else(|| Error::FieldMissing {
                    record,
                    field: fields.prediction.clone(),
                })?,
                reference: fields.reference.as_ref().and_then(group),
            });
        }
    }
    Ok(out)
}
