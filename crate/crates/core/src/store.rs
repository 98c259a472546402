//! Embedded, file-backed persistence on SQLite.
//!
//! One database file holds everything. Writes go through a single writer
//! connection and every batch is one transaction; readers use their own
//! connections so they never wait on a writer (WAL mode).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, SecondsFormat, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{FeedbackOutput, StoredFeedback};
use crate::ingestion::{EvaluationJob, JobState, Progress};
use crate::metrics::BleuReport;
use crate::model::{
    ErrorAnnotation, Instance, InstanceDraft, InstanceScore, LanguagePair, RankingFeedback, Run, RunStatus, Severity,
    Span,
};

pub const SCHEMA_VERSION: u32 = 1;
const READERS: usize = 4;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS runs (
    id                TEXT PRIMARY KEY,
    name              TEXT NOT NULL,
    source_lang       TEXT NOT NULL,
    target_lang       TEXT NOT NULL,
    created_at        TEXT NOT NULL,
    requested_metrics TEXT NOT NULL,
    device_hints      TEXT NOT NULL,
    status            TEXT NOT NULL,
    bleu              TEXT
);
CREATE TABLE IF NOT EXISTS instances (
    id         TEXT PRIMARY KEY,
    run_id     TEXT NOT NULL REFERENCES runs(id),
    idx        INTEGER NOT NULL,
    source     TEXT,
    prediction TEXT NOT NULL,
    reference  TEXT,
    UNIQUE (run_id, idx)
);
CREATE TABLE IF NOT EXISTS annotations (
    id          TEXT PRIMARY KEY,
    instance_id TEXT NOT NULL REFERENCES instances(id),
    error_type  TEXT NOT NULL,
    severity    TEXT NOT NULL CHECK (severity IN ('major', 'minor')),
    span_start  INTEGER NOT NULL CHECK (span_start >= 0),
    span_end    INTEGER NOT NULL CHECK (span_end >= span_start),
    explanation TEXT NOT NULL,
    origin      TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS annotations_by_instance ON annotations (instance_id, origin);
CREATE TABLE IF NOT EXISTS scores (
    instance_id TEXT NOT NULL REFERENCES instances(id),
    metric      TEXT NOT NULL,
    value       REAL NOT NULL,
    PRIMARY KEY (instance_id, metric)
);
CREATE TABLE IF NOT EXISTS feedback (
    id         TEXT PRIMARY KEY,
    group_key  TEXT NOT NULL,
    ordering   TEXT NOT NULL,
    session_id TEXT NOT NULL,
    consented  INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    source     TEXT NOT NULL,
    reference  TEXT NOT NULL,
    outputs    TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS feedback_by_session ON feedback (session_id);
CREATE TABLE IF NOT EXISTS jobs (
    id           TEXT PRIMARY KEY,
    run_id       TEXT NOT NULL REFERENCES runs(id),
    metrics      TEXT NOT NULL,
    device_hints TEXT NOT NULL,
    state        TEXT NOT NULL,
    completed    INTEGER NOT NULL,
    total        INTEGER NOT NULL,
    diagnostics  TEXT NOT NULL,
    created_at   TEXT NOT NULL,
    updated_at   TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS jobs_by_run ON jobs (run_id, state);
";

/// Row counts per table; used to check that a reopened store lost nothing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub runs: usize,
    pub instances: usize,
    pub annotations: usize,
    pub scores: usize,
    pub feedback: usize,
}

/// Scores and annotations produced by one metric for one run, committed
/// together.
#[derive(Debug, Clone, Default)]
pub struct MetricBatch {
    pub scores: Vec<InstanceScore>,
    pub annotations: Vec<ErrorAnnotation>,
    /// `(origin, instance ids)`: annotations from `origin` on these instances
    /// are removed before the new ones are inserted.
    pub replace: Option<(String, BTreeSet<String>)>,
}

#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    writer: Mutex<Connection>,
    readers: Vec<Mutex<Connection>>,
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn parse_ts(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn from_json<T: for<'de> Deserialize<'de>>(s: &str) -> rusqlite::Result<T> {
    serde_json::from_str(s)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn bad_value(msg: String) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(
        0,
        rusqlite::types::Type::Text,
        Box::new(std::io::Error::new(std::io::ErrorKind::InvalidData, msg)),
    )
}

const RUN_COLUMNS: &str = "r.id, r.name, r.source_lang, r.target_lang, r.created_at, r.requested_metrics, r.status, r.bleu, r.device_hints,
     (SELECT COUNT(*) FROM instances i WHERE i.run_id = r.id)";

fn run_from_row(row: &Row<'_>) -> rusqlite::Result<Run> {
    let status: String = row.get(6)?;
    let bleu: Option<String> = row.get(7)?;
    Ok(Run {
        id: row.get(0)?,
        name: row.get(1)?,
        lang: LanguagePair {
            source_lang: row.get(2)?,
            target_lang: row.get(3)?,
        },
        created_at: parse_ts(&row.get::<_, String>(4)?)?,
        requested_metrics: from_json(&row.get::<_, String>(5)?)?,
        status: status.parse().map_err(|e: Error| bad_value(e.to_string()))?,
        bleu: bleu.map(|b| from_json::<BleuReport>(&b)).transpose()?,
        device_hints: from_json(&row.get::<_, String>(8)?)?,
        instance_count: row.get::<_, i64>(9)? as usize,
    })
}

const INSTANCE_COLUMNS: &str = "id, run_id, idx, source, prediction, reference";

fn instance_from_row(row: &Row<'_>) -> rusqlite::Result<Instance> {
    Ok(Instance {
        id: row.get(0)?,
        run_id: row.get(1)?,
        index: row.get::<_, i64>(2)? as usize,
        source_text: row.get(3)?,
        prediction_text: row.get(4)?,
        reference_text: row.get(5)?,
    })
}

const ANNOTATION_COLUMNS: &str = "a.id, a.instance_id, a.error_type, a.severity, a.span_start, a.span_end, a.explanation, a.origin";

fn annotation_from_row(row: &Row<'_>) -> rusqlite::Result<ErrorAnnotation> {
    let severity: String = row.get(3)?;
    Ok(ErrorAnnotation {
        id: row.get(0)?,
        instance_id: row.get(1)?,
        error_type: row.get(2)?,
        severity: severity.parse::<Severity>().map_err(|e| bad_value(e.to_string()))?,
        span: Span::new(row.get::<_, i64>(4)? as usize, row.get::<_, i64>(5)? as usize),
        explanation: row.get(6)?,
        origin: row.get(7)?,
    })
}

const JOB_COLUMNS: &str =
    "id, run_id, metrics, device_hints, state, completed, total, diagnostics, created_at, updated_at";

fn job_from_row(row: &Row<'_>) -> rusqlite::Result<EvaluationJob> {
    let state: String = row.get(4)?;
    Ok(EvaluationJob {
        id: row.get(0)?,
        run_id: row.get(1)?,
        metrics: from_json(&row.get::<_, String>(2)?)?,
        device_hints: from_json(&row.get::<_, String>(3)?)?,
        state: state.parse().map_err(|e: Error| bad_value(e.to_string()))?,
        progress: Progress {
            completed: row.get::<_, i64>(5)? as usize,
            total: row.get::<_, i64>(6)? as usize,
        },
        diagnostics: row.get(7)?,
        created_at: parse_ts(&row.get::<_, String>(8)?)?,
        updated_at: parse_ts(&row.get::<_, String>(9)?)?,
    })
}

impl Store {
    /// Opens or creates the database at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut writer = Connection::open(&path)?;
        writer.pragma_update(None, "journal_mode", "WAL")?;
        writer.pragma_update(None, "foreign_keys", true)?;
        writer.busy_timeout(std::time::Duration::from_secs(10))?;
        {
            let tx = writer.transaction()?;
            tx.execute_batch(SCHEMA)?;
            let found: Option<String> = tx
                .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
                .optional()?;
            match found {
                None => {
                    tx.execute(
                        "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                        params![SCHEMA_VERSION.to_string()],
                    )?;
                }
                Some(v) if v == SCHEMA_VERSION.to_string() => {}
                Some(v) => {
                    return Err(Error::SchemaVersion {
                        found: v,
                        expected: SCHEMA_VERSION,
                    })
                }
            }
            tx.commit()?;
        }

        let mut readers = Vec::with_capacity(READERS);
        for _ in 0..READERS {
            let conn = Connection::open(&path)?;
            conn.busy_timeout(std::time::Duration::from_secs(10))?;
            readers.push(Mutex::new(conn));
        }
        Ok(Store {
            path,
            writer: Mutex::new(writer),
            readers,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn schema_version(&self) -> Result<u32> {
        self.read(|c| {
            let v: String = c.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))?;
            v.parse().map_err(|_| bad_value(format!("bad schema version '{v}'")))
        })
    }

    fn reader(&self) -> MutexGuard<'_, Connection> {
        for r in &self.readers {
            if let Ok(guard) = r.try_lock() {
                return guard;
            }
        }
        self.readers[0].lock().unwrap_or_else(|e| e.into_inner())
    }

    fn read<T>(&self, f: impl FnOnce(&Connection) -> rusqlite::Result<T>) -> Result<T> {
        let conn = self.reader();
        Ok(f(&conn)?)
    }

    fn write<T>(&self, f: impl FnOnce(&Transaction<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let tx = conn.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    pub fn counts(&self) -> Result<StoreCounts> {
        self.read(|c| {
            let count = |table: &str| -> rusqlite::Result<usize> {
                c.query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| r.get::<_, i64>(0))
                    .map(|n| n as usize)
            };
            Ok(StoreCounts {
                runs: count("runs")?,
                instances: count("instances")?,
                annotations: count("annotations")?,
                scores: count("scores")?,
                feedback: count("feedback")?,
            })
        })
    }

    // ---- runs ----

    pub fn insert_run(&self, run: &Run) -> Result<()> {
        self.write(|tx| {
            tx.execute(
                "INSERT INTO runs (id, name, source_lang, target_lang, created_at, requested_metrics, status, bleu, device_hints)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    run.id,
                    run.name,
                    run.lang.source_lang,
                    run.lang.target_lang,
                    ts(&run.created_at),
                    to_json(&run.requested_metrics),
                    run.status.as_str(),
                    run.bleu.as_ref().map(to_json),
                    to_json(&run.device_hints),
                ],
            )?;
            Ok(())
        })
    }

    pub fn get_run(&self, id: &str) -> Result<Option<Run>> {
        self.read(|c| {
            c.query_row(&format!("SELECT {RUN_COLUMNS} FROM runs r WHERE r.id = ?1"), [id], run_from_row)
                .optional()
        })
    }

    pub fn require_run(&self, id: &str) -> Result<Run> {
        self.get_run(id)?.ok_or_else(|| Error::UnknownRun(id.to_string()))
    }

    pub fn list_runs(&self) -> Result<Vec<Run>> {
        self.read(|c| {
            let mut stmt = c.prepare(&format!("SELECT {RUN_COLUMNS} FROM runs r ORDER BY r.created_at, r.rowid"))?;
            let rows = stmt.query_map([], run_from_row)?;
            rows.collect()
        })
    }

    /// Moves a run to `next`, failing if the current status does not allow it.
    pub fn transition_run(&self, id: &str, next: RunStatus) -> Result<()> {
        self.write(|tx| transition_in(tx, id, next))
    }

    pub fn set_run_bleu(&self, id: &str, bleu: Option<&BleuReport>) -> Result<()> {
        self.write(|tx| {
            let n = tx.execute("UPDATE runs SET bleu = ?1 WHERE id = ?2", params![bleu.map(to_json), id])?;
            if n == 0 {
                return Err(Error::UnknownRun(id.to_string()));
            }
            Ok(())
        })
    }

    // ---- instances ----

    /// Appends instances after the run's current last index, all or nothing.
    pub fn append_instances(&self, run_id: &str, drafts: &[InstanceDraft]) -> Result<Vec<Instance>> {
        self.write(|tx| {
            let exists: bool = tx.query_row("SELECT EXISTS(SELECT 1 FROM runs WHERE id = ?1)", [run_id], |r| r.get(0))?;
            if !exists {
                return Err(Error::UnknownRun(run_id.to_string()));
            }
            let next: i64 = tx.query_row(
                "SELECT COALESCE(MAX(idx) + 1, 0) FROM instances WHERE run_id = ?1",
                [run_id],
                |r| r.get(0),
            )?;
            let mut stmt = tx.prepare(
                "INSERT INTO instances (id, run_id, idx, source, prediction, reference) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            )?;
            let mut out = Vec::with_capacity(drafts.len());
            for (offset, draft) in drafts.iter().enumerate() {
                let instance = Instance {
                    id: crate::model::new_id(),
                    run_id: run_id.to_string(),
                    index: next as usize + offset,
                    source_text: draft.source.clone(),
                    prediction_text: draft.prediction.clone(),
                    reference_text: draft.reference.clone(),
                };
                stmt.execute(params![
                    instance.id,
                    instance.run_id,
                    instance.index as i64,
                    instance.source_text,
                    instance.prediction_text,
                    instance.reference_text,
                ])?;
                out.push(instance);
            }
            Ok(out)
        })
    }

    pub fn instances(&self, run_id: &str) -> Result<Vec<Instance>> {
        self.read(|c| {
            let mut stmt = c.prepare(&format!(
                "SELECT {INSTANCE_COLUMNS} FROM instances WHERE run_id = ?1 ORDER BY idx"
            ))?;
            let rows = stmt.query_map([run_id], instance_from_row)?;
            rows.collect()
        })
    }

    pub fn instance_by_index(&self, run_id: &str, index: usize) -> Result<Option<Instance>> {
        self.read(|c| {
            c.query_row(
                &format!("SELECT {INSTANCE_COLUMNS} FROM instances WHERE run_id = ?1 AND idx = ?2"),
                params![run_id, index as i64],
                instance_from_row,
            )
            .optional()
        })
    }

    pub fn instance_by_id(&self, id: &str) -> Result<Option<Instance>> {
        self.read(|c| {
            c.query_row(
                &format!("SELECT {INSTANCE_COLUMNS} FROM instances WHERE id = ?1"),
                [id],
                instance_from_row,
            )
            .optional()
        })
    }

    // ---- scores and annotations ----

    /// Annotations of a run in instance order, then insertion order.
    pub fn annotations_for_run(&self, run_id: &str) -> Result<Vec<ErrorAnnotation>> {
        self.read(|c| {
            let mut stmt = c.prepare(&format!(
                "SELECT {ANNOTATION_COLUMNS} FROM annotations a JOIN instances i ON i.id = a.instance_id
                 WHERE i.run_id = ?1 ORDER BY i.idx, a.rowid"
            ))?;
            let rows = stmt.query_map([run_id], annotation_from_row)?;
            rows.collect()
        })
    }

    /// Scores of a run in instance order, then metric name.
    pub fn scores_for_run(&self, run_id: &str) -> Result<Vec<InstanceScore>> {
        self.read(|c| {
            let mut stmt = c.prepare(
                "SELECT s.instance_id, s.metric, s.value FROM scores s JOIN instances i ON i.id = s.instance_id
                 WHERE i.run_id = ?1 ORDER BY i.idx, s.metric",
            )?;
            let rows = stmt.query_map([run_id], |r| {
                Ok(InstanceScore {
                    instance_id: r.get(0)?,
                    metric: r.get(1)?,
                    value: r.get(2)?,
                })
            })?;
            rows.collect()
        })
    }

    /// Commits one metric's output atomically. Existing scores for the same
    /// `(instance, metric)` are overwritten.
    pub fn apply_metric_batch(&self, batch: &MetricBatch) -> Result<()> {
        self.write(|tx| {
            if let Some((origin, instance_ids)) = &batch.replace {
                let mut del = tx.prepare("DELETE FROM annotations WHERE instance_id = ?1 AND origin = ?2")?;
                for id in instance_ids {
                    del.execute(params![id, origin])?;
                }
            }
            let mut upsert = tx.prepare(
                "INSERT INTO scores (instance_id, metric, value) VALUES (?1, ?2, ?3)
                 ON CONFLICT (instance_id, metric) DO UPDATE SET value = excluded.value",
            )?;
            for s in &batch.scores {
                upsert.execute(params![s.instance_id, s.metric, s.value])?;
            }
            let mut insert = tx.prepare(
                "INSERT INTO annotations (id, instance_id, error_type, severity, span_start, span_end, explanation, origin)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            )?;
            for a in &batch.annotations {
                insert.execute(params![
                    a.id,
                    a.instance_id,
                    a.error_type,
                    a.severity.as_str(),
                    a.span.start as i64,
                    a.span.end as i64,
                    a.explanation,
                    a.origin,
                ])?;
            }
            Ok(())
        })
    }

    // ---- feedback ----

    pub fn insert_feedback(&self, record: &StoredFeedback) -> Result<()> {
        self.write(|tx| {
            let f = &record.feedback;
            tx.execute(
                "INSERT INTO feedback (id, group_key, ordering, session_id, consented, created_at, source, reference, outputs)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    f.id,
                    f.group_key,
                    to_json(&f.ordering),
                    f.session_id,
                    f.consented,
                    ts(&f.created_at),
                    record.source,
                    record.reference,
                    to_json(&record.outputs),
                ],
            )?;
            Ok(())
        })
    }

    pub fn delete_feedback_for_session(&self, session_id: &str) -> Result<usize> {
        self.write(|tx| Ok(tx.execute("DELETE FROM feedback WHERE session_id = ?1", [session_id])?))
    }

    /// Consented feedback in submission order.
    pub fn list_feedback(&self) -> Result<Vec<StoredFeedback>> {
        self.read(|c| {
            let mut stmt = c.prepare(
                "SELECT id, group_key, ordering, session_id, consented, created_at, source, reference, outputs
                 FROM feedback WHERE consented = 1 ORDER BY created_at, rowid",
            )?;
            let rows = stmt.query_map([], |r| {
                Ok(StoredFeedback {
                    feedback: RankingFeedback {
                        id: r.get(0)?,
                        group_key: r.get(1)?,
                        ordering: from_json(&r.get::<_, String>(2)?)?,
                        session_id: r.get(3)?,
                        consented: r.get(4)?,
                        created_at: parse_ts(&r.get::<_, String>(5)?)?,
                    },
                    source: r.get(6)?,
                    reference: r.get(7)?,
                    outputs: from_json::<Vec<FeedbackOutput>>(&r.get::<_, String>(8)?)?,
                })
            })?;
            rows.collect()
        })
    }

    // ---- jobs ----

    /// Records a queued job and moves its run to `evaluating`, refusing when
    /// the run already has an active job.
    pub fn enqueue_job(&self, job: &EvaluationJob) -> Result<()> {
        self.write(|tx| {
            let active: bool = tx.query_row(
                "SELECT EXISTS(SELECT 1 FROM jobs WHERE run_id = ?1 AND state IN ('queued', 'running'))",
                [&job.run_id],
                |r| r.get(0),
            )?;
            if active {
                return Err(Error::RunBusy(job.run_id.clone()));
            }
            transition_in(tx, &job.run_id, RunStatus::Evaluating)?;
            tx.execute(
                &format!("INSERT INTO jobs ({JOB_COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)"),
                params![
                    job.id,
                    job.run_id,
                    to_json(&job.metrics),
                    to_json(&job.device_hints),
                    job.state.as_str(),
                    job.progress.completed as i64,
                    job.progress.total as i64,
                    job.diagnostics,
                    ts(&job.created_at),
                    ts(&job.updated_at),
                ],
            )?;
            Ok(())
        })
    }

    pub fn get_job(&self, id: &str) -> Result<Option<EvaluationJob>> {
        self.read(|c| {
            c.query_row(&format!("SELECT {JOB_COLUMNS} FROM jobs WHERE id = ?1"), [id], job_from_row)
                .optional()
        })
    }

    /// Jobs still waiting to run, oldest first.
    pub fn queued_jobs(&self) -> Result<Vec<EvaluationJob>> {
        self.read(|c| {
            let mut stmt = c.prepare(&format!(
                "SELECT {JOB_COLUMNS} FROM jobs WHERE state = 'queued' ORDER BY created_at, rowid"
            ))?;
            let rows = stmt.query_map([], job_from_row)?;
            rows.collect()
        })
    }

    pub fn update_job_progress(&self, id: &str, progress: Progress) -> Result<()> {
        self.write(|tx| {
            tx.execute(
                "UPDATE jobs SET completed = ?1, total = ?2, updated_at = ?3 WHERE id = ?4",
                params![progress.completed as i64, progress.total as i64, ts(&Utc::now()), id],
            )?;
            Ok(())
        })
    }

    /// Moves a job to `next`. Finishing a job also settles its run: `done`
    /// makes the run `ready`, `failed` makes it `failed`.
    pub fn set_job_state(&self, id: &str, next: JobState, diagnostics: Option<&str>) -> Result<()> {
        self.write(|tx| {
            let (run_id, state): (String, String) =
                tx.query_row("SELECT run_id, state FROM jobs WHERE id = ?1", [id], |r| Ok((r.get(0)?, r.get(1)?)))?;
            let current: JobState = state.parse()?;
            if !current.can_transition_to(next) {
                return Err(Error::InvalidTransition {
                    from: current.as_str().into(),
                    to: next.as_str().into(),
                });
            }
            tx.execute(
                "UPDATE jobs SET state = ?1, diagnostics = COALESCE(?2, diagnostics), updated_at = ?3 WHERE id = ?4",
                params![next.as_str(), diagnostics, ts(&Utc::now()), id],
            )?;
            match next {
                JobState::Done => transition_in(tx, &run_id, RunStatus::Ready)?,
                JobState::Failed => transition_in(tx, &run_id, RunStatus::Failed)?,
                _ => {}
            }
            Ok(())
        })
    }

    /// Fails jobs left queued or running by a previous process.
    pub fn fail_interrupted_jobs(&self) -> Result<usize> {
        let stale: Vec<String> = self.read(|c| {
            let mut stmt = c.prepare("SELECT id FROM jobs WHERE state = 'running'")?;
            let rows = stmt.query_map([], |r| r.get(0))?;
            rows.collect()
        })?;
        for id in &stale {
            self.set_job_state(id, JobState::Failed, Some("interrupted: the service stopped while this job was running"))?;
        }
        Ok(stale.len())
    }
}

fn transition_in(tx: &Transaction<'_>, run_id: &str, next: RunStatus) -> Result<()> {
    let status: Option<String> = tx
        .query_row("SELECT status FROM runs WHERE id = ?1", [run_id], |r| r.get(0))
        .optional()?;
    let current: RunStatus = status.ok_or_else(|| Error::UnknownRun(run_id.to_string()))?.parse()?;
    if !current.can_transition_to(next) {
        return Err(Error::InvalidTransition {
            from: current.as_str().into(),
            to: next.as_str().into(),
        });
    }
    tx.execute("UPDATE runs SET status = ?1 WHERE id = ?2", params![next.as_str(), run_id])?;
    Ok(())
}
