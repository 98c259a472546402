//! Line-delimited JSON protocol for external scorers.
//!
//! The engine writes one [`AdapterInput`] per instance to the adapter's
//! stdin, closes it, and reads one [`AdapterRecord`] per line from stdout.
//! The same record format is accepted for direct file ingestion.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, RawAnnotation, Run};

/// Which instance a record refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceSelector {
    Index(usize),
    Id(String),
}

impl std::fmt::Display for InstanceSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InstanceSelector::Index(i) => write!(f, "index {i}"),
            InstanceSelector::Id(id) => write!(f, "id '{id}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<RawAnnotation>>,
}

impl AdapterRecord {
    pub fn selector(&self) -> Option<InstanceSelector> {
        match (&self.index, &self.id) {
            (Some(i), _) => Some(InstanceSelector::Index(*i)),
            (None, Some(id)) => Some(InstanceSelector::Id(id.clone())),
            (None, None) => None,
        }
    }

    fn check(&self, line: usize) -> Result<()> {
        let malformed = |message: &str| Error::MalformedRecord {
            line,
            message: message.to_string(),
        };
        if self.selector().is_none() {
            return Err(malformed("record needs an 'index' or 'id'"));
        }
        if self.score.is_none() && self.errors.is_none() {
            return Err(malformed("record needs a 'score' or an 'errors' list"));
        }
        Ok(())
    }
}

/// A record paired with the 1-based line it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberedRecord {
    pub line: usize,
    pub record: AdapterRecord,
}

/// Parses adapter records, one JSON object per line. Blank lines are skipped.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<NumberedRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim_start_matches('\u{feff}').trim();
        if text.is_empty() {
            continue;
        }
        let record: AdapterRecord = serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        record.check(line_no)?;
        out.push(NumberedRecord { line: line_no, record });
    }
    Ok(out)
}

pub fn parse_records_str(text: &str) -> Result<Vec<NumberedRecord>> {
    parse_records(text.as_bytes())
}

/// What an adapter receives for each instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterInput {
    pub index: usize,
    pub id: String,
    pub source: Option<String>,
    pub prediction: String,
    pub reference: Option<String>,
    pub source_lang: String,
    pub target_lang: String,
}

impl AdapterInput {
    pub fn new(run: &Run, instance: &Instance) -> Self {
        AdapterInput {
            index: instance.index,
            id: instance.id.clone(),
            source: instance.source_text.clone(),
            prediction: instance.prediction_text.clone(),
            reference: instance.reference_text.clone(),
            source_lang: run.lang.source_lang.clone(),
            target_lang: run.lang.target_lang.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum CommandSpec {
    Argv(Vec<String>),
    Line(String),
}

/// One configured external scorer.
///
/// `command` is an argv template. The placeholders `{devices}`, `{metric}`,
/// `{run_id}`, `{source_lang}` and `{target_lang}` are substituted in every
/// argument. Device hints are also exported as `CANVAS_DEVICES`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct AdapterConfig {
    command: CommandSpec,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

impl AdapterConfig {
    pub fn new<I, S>(argv: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AdapterConfig {
            command: CommandSpec::Argv(argv.into_iter().map(Into::into).collect()),
            env: BTreeMap::new(),
        }
    }

    pub fn with_env(mut self, key: &str, value: &str) -> Self {
        self.env.insert(key.to_string(), value.to_string());
        self
    }

    pub fn argv_template(&self) -> Result<Vec<String>> {
        let argv = match &self.command {
            CommandSpec::Argv(v) => v.clone(),
            CommandSpec::Line(line) => {
                shlex::split(line).ok_or_else(|| Error::Config(format!("cannot split adapter command '{line}'")))?
            }
        };
        if argv.is_empty() {
            return Err(Error::Config("adapter command is empty".into()));
        }
        Ok(argv)
    }
}

/// Adapter table keyed by metric name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct AdapterTable {
    #[serde(default)]
    adapters: BTreeMap<String, AdapterConfig>,
}

impl AdapterTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, metric: &str, config: AdapterConfig) {
        self.adapters.insert(metric.to_lowercase(), config);
    }

    pub fn get(&self, metric: &str) -> Option<&AdapterConfig> {
        self.adapters.get(metric)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let parsed: AdapterTable = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut table = AdapterTable::new();
        for (name, config) in parsed.adapters {
            config.argv_template()?;
            table.insert(&name, config);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read adapter config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Runs an external adapter over `instances` and parses what it prints.
///
/// The adapter is given the device hints verbatim; the engine never loads
/// models itself. A nonzero exit status becomes [`Error::AdapterFailed`]
/// carrying the tail of the adapter's stderr.
pub fn run_adapter(
    metric: &str,
    config: &AdapterConfig,
    run: &Run,
    instances: &[Instance],
    device_hints: &[String],
) -> Result<Vec<NumberedRecord>> {
    let devices = device_hints.join(",");
    let argv: Vec<String> = config
        .argv_template()?
        .into_iter()
        .map(|arg| {
            arg.replace("{devices}", &devices)
                .replace("{metric}", metric)
                .replace("{run_id}", &run.id)
                .replace("{source_lang}", &run.lang.source_lang)
                .replace("{target_lang}", &run.lang.target_lang)
        })
        .collect();

    let failed = |diagnostics: String| Error::AdapterFailed {
        metric: metric.to_string(),
        diagnostics,
    };

    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .envs(&config.env)
        .env("CANVAS_DEVICES", &devices)
        .env("CANVAS_METRIC", metric)
        .env("CANVAS_RUN_ID", &run.id)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| failed(format!("cannot start '{}': {e}", argv[0])))?;

    let mut payload = Vec::new();
    for instance in instances {
        serde_json::to_writer(&mut payload, &AdapterInput::new(run, instance))
            .map_err(|e| Error::Config(e.to_string()))?;
        payload.push(b'\n');
    }

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = thread::spawn(move || {
        // adapters that exit early close the pipe; that surfaces via exit status
        let _ = stdin.write_all(&payload);
    });
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let err_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let mut output = String::new();
    let read_result = BufReader::new(child.stdout.take().expect("stdout is piped")).read_to_string(&mut output);
    let status = child.wait()?;
    let _ = writer.join();
    let stderr_text = err_reader.join().unwrap_or_default();
    read_result?;

    if !status.success() {
        let code = status.code().map_or_else(|| "signal".to_string(), |c| c.to_string());
        return Err(failed(format!("exit status {code}: {}", tail(&stderr_text, 2000))));
    }
    parse_records_str(&output)
}

fn tail(text: &str, max_chars: usize) -> String {
    let text = text.trim();
    let count = text.chars().count();
    if count <= max_chars {
        text.to_string()
    } else {
        text.chars().skip(count - max_chars).collect()
    }
}
