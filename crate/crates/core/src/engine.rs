//! The [`Canvas`] facade: every engine operation over one store, plus the
//! background workers that run evaluation jobs.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, DashboardStats};
use crate::error::{Error, Result};
use crate::feedback::{
    build_groups, check_permutation, FeedbackExportRecord, FeedbackOutput, InstanceGroup, RankingSubmission,
    RevokeOutcome, RunData, StoredFeedback, SubmitOutcome,
};
use crate::ingestion::{
    extract, AddOutcome, AnnotationCounts, EvaluationJob, ExportRecord, ExportedError, ExtractionSpec,
    ImportOutcome, IndexedWarning, IngestPreview, InputFile, JobState, Progress, PREVIEW_LIMIT,
};
use crate::metrics::{
    self, annotation_score, baseline_annotate, corpus_bleu, run_adapter, AdapterTable, InstanceSelector,
    NumberedRecord, Smoothing, BASELINE, BLEU, DEFAULT_MAX_N,
};
use crate::model::{
    check_raw_instance, new_id, validate_annotation, ErrorAnnotation, Instance, InstanceDraft, InstanceScore,
    LanguagePair, RankingFeedback, RawInstance, Run, RunStatus, Severity, Span,
};
use crate::page::{Page, PageRequest};
use crate::search::{match_documents, MatchOutcome, SearchDoc, SearchQuery};
use crate::store::{MetricBatch, Store, StoreCounts, SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct CanvasConfig {
    pub adapters: AdapterTable,
    /// When false, consented rankings are acknowledged but not kept.
    pub retain_feedback: bool,
    pub workers: usize,
    pub histogram_bins: usize,
    /// Fail jobs left running and resume queued ones on open. Short-lived
    /// clients sharing a store with a server turn this off.
    pub recover_jobs: bool,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        CanvasConfig {
            adapters: AdapterTable::new(),
            retain_feedback: true,
            workers: 2,
            histogram_bins: analytics::DEFAULT_BINS,
            recover_jobs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub groups: Vec<InstanceGroup>,
    pub matched_error_ids: BTreeSet<String>,
    /// Matching groups across all pages.
    pub total: usize,
    pub matched_instances: usize,
    pub page: usize,
    pub page_size: usize,
}

struct Inner {
    store: Store,
    config: CanvasConfig,
    queue: Mutex<VecDeque<String>>,
    wake: Condvar,
    shutdown: AtomicBool,
}

/// Engine handle. Dropping it stops the workers after their current job.
pub struct Canvas {
    inner: Arc<Inner>,
    workers: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for Canvas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Canvas").field("store", &self.inner.store.path()).finish()
    }
}

impl Drop for Canvas {
    fn drop(&mut self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        self.inner.wake.notify_all();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Canvas {
    pub fn open(path: impl AsRef<Path>, config: CanvasConfig) -> Result<Self> {
        let store = Store::open(path)?;
        let mut pending = VecDeque::new();
        if config.recover_jobs {
            let interrupted = store.fail_interrupted_jobs()?;
            if interrupted > 0 {
                log::warn!("{interrupted} evaluation job(s) were interrupted by a restart");
            }
            pending.extend(store.queued_jobs()?.into_iter().map(|j| j.id));
        }
        let workers = config.workers.max(1);
        let inner = Arc::new(Inner {
            store,
            config,
            queue: Mutex::new(pending),
            wake: Condvar::new(),
            shutdown: AtomicBool::new(false),
        });
        let workers = (0..workers)
            .map(|n| {
                let inner = Arc::clone(&inner);
                thread::Builder::new()
                    .name(format!("canvas-worker-{n}"))
                    .spawn(move || worker_loop(&inner))
                    .expect("spawn worker thread")
            })
            .collect();
        Ok(Canvas { inner, workers })
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn config(&self) -> &CanvasConfig {
        &self.inner.config
    }

    pub fn counts(&self) -> Result<StoreCounts> {
        self.store().counts()
    }

    pub fn health(&self) -> Result<Health> {
        Ok(Health {
            status: "ok".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: self.store().schema_version()?,
        })
    }

    // ---- runs and instances ----

    fn check_metric(&self, metric: &str) -> Result<()> {
        if metrics::is_builtin(metric) || self.config().adapters.get(metric).is_some() {
            Ok(())
        } else {
            Err(Error::UnknownMetric(metric.to_string()))
        }
    }

    pub fn create_run(
        &self,
        name: &str,
        lang: LanguagePair,
        requested_metrics: &[String],
        device_hints: &[String],
    ) -> Result<Run> {
        let mut metrics = BTreeSet::new();
        for m in requested_metrics {
            let m = m.trim().to_lowercase();
            self.check_metric(&m)?;
            metrics.insert(m);
        }
        let run = Run {
            id: new_id(),
            name: name.to_string(),
            lang,
            created_at: Utc::now(),
            requested_metrics: metrics,
            device_hints: device_hints.to_vec(),
            status: RunStatus::Created,
            bleu: None,
            instance_count: 0,
        };
        self.store().insert_run(&run)?;
        Ok(run)
    }

    pub fn list_runs(&self) -> Result<Vec<Run>> {
        self.store().list_runs()
    }

    pub fn get_run(&self, run_id: &str) -> Result<Run> {
        self.store().require_run(run_id)
    }

    pub fn instances(&self, run_id: &str) -> Result<Vec<Instance>> {
        self.get_run(run_id)?;
        self.store().instances(run_id)
    }

    /// Validates and appends client-submitted instances as one batch.
    pub fn add_instances(&self, run_id: &str, raw: &[RawInstance]) -> Result<AddOutcome> {
        self.get_run(run_id)?;
        let drafts = raw
            .iter()
            .enumerate()
            .map(|(i, r)| {
                check_raw_instance(r).map(|c| c.draft).map_err(|e| match e {
                    Error::NonTextPayload { field } => Error::NonTextPayload {
                        field: format!("{field} (record {})", i + 1),
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.add_drafts(run_id, drafts)
    }

    /// Appends already-typed instances as one batch.
    pub fn add_drafts(&self, run_id: &str, drafts: Vec<InstanceDraft>) -> Result<AddOutcome> {
        let run = self.get_run(run_id)?;
        if drafts.is_empty() {
            return Ok(AddOutcome {
                count: 0,
                first_index: run.instance_count,
                warnings: Vec::new(),
            });
        }
        let drafts: Vec<InstanceDraft> = drafts
            .into_iter()
            .map(|d| InstanceDraft {
                source: d.source.map(strip_bom),
                prediction: strip_bom(d.prediction),
                reference: d.reference.map(strip_bom),
            })
            .collect();
        let inserted = self.store().append_instances(run_id, &drafts)?;
        let warnings = inserted
            .iter()
            .filter(|i| i.prediction_text.is_empty())
            .map(|i| IndexedWarning {
                index: i.index,
                warning: crate::model::InstanceWarning::EmptyPrediction,
            })
            .collect();
        Ok(AddOutcome {
            count: inserted.len(),
            first_index: inserted[0].index,
            warnings,
        })
    }

    pub fn preview_file(&self, files: &[InputFile], spec: &ExtractionSpec) -> Result<IngestPreview> {
        let drafts = extract(spec, files)?;
        Ok(IngestPreview {
            count: drafts.len(),
            records: drafts.into_iter().take(PREVIEW_LIMIT).collect(),
        })
    }

    /// Extracts instances from uploaded files and appends them, all or
    /// nothing.
    pub fn ingest_file(&self, run_id: &str, files: &[InputFile], spec: &ExtractionSpec) -> Result<AddOutcome> {
        self.get_run(run_id)?;
        spec.check()?;
        let drafts = extract(spec, files)?;
        self.add_drafts(run_id, drafts)
    }

    // ---- scores and annotations ----

    /// Stores adapter-format records under `origin`. Scores are recorded as
    /// metric `origin`; a record with errors but no score gets the
    /// annotation-derived score. Errors from a record replace earlier
    /// errors of the same origin on that instance.
    pub fn ingest_annotations(&self, run_id: &str, records: &[NumberedRecord], origin: &str) -> Result<AnnotationCounts> {
        self.get_run(run_id)?;
        let origin = origin.trim().to_lowercase();
        if origin.is_empty() {
            return Err(Error::InvalidSpec("origin must not be empty".into()));
        }
        let instances = self.store().instances(run_id)?;
        let by_index: HashMap<usize, &Instance> = instances.iter().map(|i| (i.index, i)).collect();
        let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();

        let existing_scores: HashMap<String, f64> = self
            .store()
            .scores_for_run(run_id)?
            .into_iter()
            .filter(|s| s.metric == origin)
            .map(|s| (s.instance_id, s.value))
            .collect();
        let mut existing_errors: HashMap<String, Vec<ErrorKey>> = HashMap::new();
        for a in self.store().annotations_for_run(run_id)? {
            if a.origin == origin {
                existing_errors.entry(a.instance_id.clone()).or_default().push(ErrorKey::of(&a));
            }
        }

        // later records for the same instance supersede earlier ones
        let mut pending: BTreeMap<usize, (f64, Option<Vec<ErrorAnnotation>>)> = BTreeMap::new();
        let mut counts = AnnotationCounts::default();
        for NumberedRecord { line, record } in records {
            let selector = record.selector().ok_or(Error::MalformedRecord {
                line: *line,
                message: "record needs an 'index' or 'id'".into(),
            })?;
            let instance = match &selector {
                InstanceSelector::Index(i) => by_index.get(i),
                InstanceSelector::Id(id) => by_id.get(id.as_str()),
            }
            .ok_or_else(|| Error::UnknownInstance {
                selector: selector.to_string(),
                record: Some(*line),
            })?;
            let errors = record
                .errors
                .as_ref()
                .map(|raw| raw.iter().map(|r| validate_annotation(r, instance, &origin)).collect::<Result<Vec<_>>>())
                .transpose()?;
            let score = match (record.score, &errors) {
                (Some(s), _) => s,
                (None, Some(errs)) => annotation_score(errs.iter().map(|e| e.severity)),
                (None, None) => {
                    return Err(Error::MalformedRecord {
                        line: *line,
                        message: "record needs a 'score' or an 'errors' list".into(),
                    })
                }
            };
            InstanceScore::new(&instance.id, &origin, score)?;
            if pending.insert(instance.index, (score, errors)).is_some() {
                counts.skipped += 1;
            }
        }

        let mut batch = MetricBatch {
            replace: Some((origin.clone(), BTreeSet::new())),
            ..Default::default()
        };
        for (index, (score, errors)) in pending {
            let instance = by_index[&index];
            let same_score = existing_scores.get(&instance.id) == Some(&score);
            let same_errors = match &errors {
                None => true,
                Some(new) => {
                    let mut old = existing_errors.get(&instance.id).cloned().unwrap_or_default();
                    let mut new: Vec<ErrorKey> = new.iter().map(ErrorKey::of).collect();
                    old.sort();
                    new.sort();
                    old == new
                }
            };
            if same_score && same_errors {
                counts.skipped += 1;
                continue;
            }
            batch.scores.push(InstanceScore::new(&instance.id, &origin, score)?);
            counts.scores_added += 1;
            if let Some(errors) = errors {
                if let Some((_, ids)) = batch.replace.as_mut() {
                    ids.insert(instance.id.clone());
                }
                counts.errors_added += errors.len();
                batch.annotations.extend(errors);
            }
        }
        self.store().apply_metric_batch(&batch)?;
        Ok(counts)
    }

    // ---- evaluation ----

    /// Validates the request and queues a job; returns immediately.
    pub fn start_evaluation(&self, run_id: &str, metrics: &[String], device_hints: &[String]) -> Result<EvaluationJob> {
        let run = self.get_run(run_id)?;
        let metrics: Vec<String> = if metrics.is_empty() {
            run.requested_metrics.iter().cloned().collect()
        } else {
            let mut seen = BTreeSet::new();
            metrics
                .iter()
                .map(|m| m.trim().to_lowercase())
                .filter(|m| seen.insert(m.clone()))
                .collect()
        };
        if metrics.is_empty() {
            return Err(Error::UnknownMetric("no metrics requested".into()));
        }
        for m in &metrics {
            if !metrics::is_builtin(m) && self.config().adapters.get(m).is_none() {
                return Err(Error::AdapterMissing(m.clone()));
            }
        }
        let instances = self.store().instances(run_id)?;
        if instances.is_empty() {
            return Err(Error::EmptyRun);
        }
        if metrics.iter().any(|m| m == BLEU || m == BASELINE) {
            let missing: Vec<usize> = instances
                .iter()
                .filter(|i| i.reference_text.is_none())
                .map(|i| i.index)
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingReference { indices: missing });
            }
        }
        let device_hints = if device_hints.is_empty() {
            run.device_hints.clone()
        } else {
            device_hints.to_vec()
        };
        let now = Utc::now();
        let job = EvaluationJob {
            id: new_id(),
            run_id: run_id.to_string(),
            progress: Progress {
                completed: 0,
                total: instances.len() * metrics.len(),
            },
            metrics,
            device_hints,
            state: JobState::Queued,
            diagnostics: String::new(),
            created_at: now,
            updated_at: now,
        };
        self.store().enqueue_job(&job)?;
        self.inner.queue.lock().unwrap_or_else(|e| e.into_inner()).push_back(job.id.clone());
        self.inner.wake.notify_one();
        Ok(job)
    }

    pub fn job_status(&self, job_id: &str) -> Result<EvaluationJob> {
        self.store().get_job(job_id)?.ok_or_else(|| Error::NotFound {
            kind: "job",
            id: job_id.to_string(),
        })
    }

    /// Polls until the job is done or failed, or `timeout` passes.
    pub fn wait_for_job(&self, job_id: &str, timeout: Duration) -> Result<EvaluationJob> {
        let deadline = Instant::now() + timeout;
        loop {
            let job = self.job_status(job_id)?;
            if job.state.is_terminal() || Instant::now() >= deadline {
                return Ok(job);
            }
            thread::sleep(Duration::from_millis(10));
        }
    }

    // ---- export and import ----

    pub fn export_run(&self, run_id: &str) -> Result<Vec<ExportRecord>> {
        let data = self.run_data(run_id)?;
        let scores = data.scores_by_instance();
        let mut errors = data.annotations_by_instance();
        Ok(data
            .instances
            .iter()
            .map(|inst| ExportRecord {
                index: inst.index,
                source: inst.source_text.clone(),
                prediction: inst.prediction_text.clone(),
                reference: inst.reference_text.clone(),
                scores: scores.get(inst.id.as_str()).cloned().unwrap_or_default(),
                errors: errors
                    .remove(inst.id.as_str())
                    .unwrap_or_default()
                    .into_iter()
                    .map(|a| ExportedError {
                        error_type: a.error_type,
                        severity: a.severity,
                        span: a.span,
                        explanation: a.explanation,
                        origin: a.origin,
                    })
                    .collect(),
            })
            .collect())
    }

    /// Appends exported records to a run, recreating texts, scores and
    /// annotations. Record order is kept; indices continue after the run's
    /// existing instances.
    pub fn import_run(&self, run_id: &str, records: &[ExportRecord]) -> Result<ImportOutcome> {
        self.get_run(run_id)?;
        let drafts: Vec<InstanceDraft> = records
            .iter()
            .map(|r| InstanceDraft {
                source: r.source.clone(),
                prediction: r.prediction.clone(),
                reference: r.reference.clone(),
            })
            .collect();
        // check everything before the first write
        let mut staged: Vec<(Vec<(String, f64)>, Vec<(String, Severity, Span, String, String)>)> = Vec::new();
        for (rec, draft) in records.iter().zip(&drafts) {
            let len = draft.prediction.chars().count();
            let mut scores = Vec::new();
            for (m, v) in &rec.scores {
                InstanceScore::new("", m, *v)?;
                scores.push((m.clone(), *v));
            }
            let mut errs = Vec::new();
            for e in &rec.errors {
                let span = e.span.check(len)?;
                errs.push((e.error_type.clone(), e.severity, span, e.explanation.clone(), e.origin.clone()));
            }
            staged.push((scores, errs));
        }
        let outcome = self.add_drafts(run_id, drafts)?;
        let instances = self.store().instances(run_id)?;
        let mut batch = MetricBatch::default();
        for (offset, (scores, errs)) in staged.into_iter().enumerate() {
            let inst = &instances[outcome.first_index + offset];
            for (m, v) in scores {
                batch.scores.push(InstanceScore::new(&inst.id, &m, v)?);
            }
            for (error_type, severity, span, explanation, origin) in errs {
                batch.annotations.push(ErrorAnnotation {
                    id: new_id(),
                    instance_id: inst.id.clone(),
                    error_type,
                    severity,
                    span,
                    explanation,
                    origin,
                });
            }
        }
        self.store().apply_metric_batch(&batch)?;
        Ok(ImportOutcome {
            instances: outcome.count,
            scores: batch.scores.len(),
            annotations: batch.annotations.len(),
        })
    }

    // ---- reading several runs ----

    pub fn run_data(&self, run_id: &str) -> Result<RunData> {
        let run = self.get_run(run_id)?;
        Ok(RunData {
            instances: self.store().instances(run_id)?,
            scores: self.store().scores_for_run(run_id)?,
            annotations: self.store().annotations_for_run(run_id)?,
            run,
        })
    }

    /// Data for the selected runs, in the given order; all runs when the
    /// selection is empty.
    pub fn selection(&self, run_ids: &[String]) -> Result<Vec<RunData>> {
        let ids: Vec<String> = if run_ids.is_empty() {
            self.list_runs()?.into_iter().map(|r| r.id).collect()
        } else {
            let mut seen = BTreeSet::new();
            run_ids.iter().filter(|id| seen.insert(id.as_str())).cloned().collect()
        };
        ids.iter().map(|id| self.run_data(id)).collect()
    }

    // ---- search ----

    /// Runs `query` over the selected runs and returns the matching
    /// instances grouped like [`Canvas::group_instances`].
    pub fn search(&self, query: &SearchQuery, run_ids: &[String], page: PageRequest) -> Result<SearchResult> {
        page.check()?;
        let runs = self.selection(run_ids)?;
        let (matched, outcome) = match_runs(query, &runs);
        let groups = build_groups(&runs, |r, i| matched[r].contains(&i));
        let page = page.slice(groups)?;
        Ok(SearchResult {
            groups: page.items,
            matched_error_ids: outcome.matched_error_ids,
            total: page.total,
            matched_instances: outcome.matched.len(),
            page: page.page,
            page_size: page.page_size,
        })
    }

    // ---- analytics ----

    pub fn run_summary(&self, run_id: &str) -> Result<DashboardStats> {
        let data = self.run_data(run_id)?;
        analytics::summarize(
            &data.run,
            &data.scores,
            &data.annotations,
            &BTreeMap::new(),
            self.config().histogram_bins,
        )
    }

    /// Side-by-side stats whose histograms share one range per metric.
    pub fn compare_runs(&self, run_ids: &[String]) -> Result<Vec<DashboardStats>> {
        if run_ids.is_empty() {
            return Err(Error::UnknownRun("no runs selected".into()));
        }
        let runs = self.selection(run_ids)?;
        let ranges = analytics::shared_ranges(runs.iter().map(|d| d.scores.as_slice()));
        runs.iter()
            .map(|d| analytics::summarize(&d.run, &d.scores, &d.annotations, &ranges, self.config().histogram_bins))
            .collect()
    }

    // ---- groups and feedback ----

    pub fn group_instances(&self, run_ids: &[String], page: PageRequest) -> Result<Page<InstanceGroup>> {
        page.check()?;
        let runs = self.selection(run_ids)?;
        page.slice(build_groups(&runs, |_, _| true))
    }

    pub fn submit_ranking(&self, submission: &RankingSubmission) -> Result<SubmitOutcome> {
        let runs = self.selection(submission.run_ids.as_deref().unwrap_or(&[]))?;
        let group = build_groups(&runs, |_, _| true)
            .into_iter()
            .find(|g| g.group_key == submission.group_key)
            .ok_or_else(|| Error::UnknownGroup(submission.group_key.clone()))?;
        check_permutation(&group, &submission.ordering)?;
        if !submission.consented || !self.config().retain_feedback {
            return Ok(SubmitOutcome {
                stored: false,
                feedback_id: None,
            });
        }
        let feedback = RankingFeedback {
            id: new_id(),
            group_key: group.group_key.clone(),
            ordering: submission.ordering.clone(),
            session_id: submission.session_id.clone(),
            consented: true,
            created_at: Utc::now(),
        };
        let outputs = group
            .members
            .iter()
            .map(|m| FeedbackOutput {
                run_id: m.run_id.clone(),
                run_name: m.run_name.clone(),
                prediction: m.instance.prediction_text.clone(),
            })
            .collect();
        let record = StoredFeedback {
            source: group.source_text.unwrap_or_default(),
            reference: group.reference_text.unwrap_or_default(),
            outputs,
            feedback,
        };
        self.store().insert_feedback(&record)?;
        Ok(SubmitOutcome {
            stored: true,
            feedback_id: Some(record.feedback.id),
        })
    }

    pub fn revoke_feedback(&self, session_id: &str) -> Result<RevokeOutcome> {
        Ok(RevokeOutcome {
            deleted: self.store().delete_feedback_for_session(session_id)?,
        })
    }

    pub fn export_feedback(&self) -> Result<Vec<FeedbackExportRecord>> {
        Ok(self.store().list_feedback()?.into_iter().map(Into::into).collect())
    }
}

pub fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn strip_bom(s: String) -> String {
    match s.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_string(),
        None => s,
    }
}

/// Evaluates `query` over every run; returns matched instance positions per
/// run and the combined outcome.
pub fn match_runs(query: &SearchQuery, runs: &[RunData]) -> (Vec<BTreeSet<usize>>, MatchOutcome) {
    let mut per_run = Vec::with_capacity(runs.len());
    let mut total = MatchOutcome::default();
    for data in runs {
        let annotations = data.annotations_by_instance();
        let empty = Vec::new();
        let docs: Vec<SearchDoc<'_>> = data
            .instances
            .iter()
            .map(|instance| SearchDoc {
                instance,
                annotations: annotations.get(instance.id.as_str()).unwrap_or(&empty),
                lang: &data.run.lang,
            })
            .collect();
        let outcome = match_documents(query, &docs);
        total.matched.extend(outcome.matched.iter().copied());
        total.matched_error_ids.extend(outcome.matched_error_ids);
        per_run.push(outcome.matched.into_iter().collect());
    }
    (per_run, total)
}

/// Annotation content without identity, for idempotence checks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ErrorKey(String, Severity, Span, String);

impl ErrorKey {
    fn of(a: &ErrorAnnotation) -> Self {
        ErrorKey(a.error_type.clone(), a.severity, a.span, a.explanation.clone())
    }
}

fn worker_loop(inner: &Inner) {
    loop {
        let job_id = {
            let mut queue = inner.queue.lock().unwrap_or_else(|e| e.into_inner());
            loop {
                if inner.shutdown.load(Ordering::SeqCst) {
                    return;
                }
                if let Some(id) = queue.pop_front() {
                    break id;
                }
                queue = inner
                    .wake
                    .wait_timeout(queue, Duration::from_millis(200))
                    .unwrap_or_else(|e| e.into_inner())
                    .0;
            }
        };
        if let Err(e) = process_job(inner, &job_id) {
            log::error!("job {job_id}: {e}");
        }
    }
}

fn process_job(inner: &Inner, job_id: &str) -> Result<()> {
    let Some(job) = inner.store.get_job(job_id)? else {
        return Ok(());
    };
    if job.state != JobState::Queued {
        return Ok(());
    }
    inner.store.set_job_state(job_id, JobState::Running, None)?;
    match execute_job(inner, &job) {
        Ok(()) => inner.store.set_job_state(job_id, JobState::Done, None),
        Err(e) => {
            log::warn!("job {job_id} failed: {e}");
            inner.store.set_job_state(job_id, JobState::Failed, Some(&e.to_string()))
        }
    }
}

fn execute_job(inner: &Inner, job: &EvaluationJob) -> Result<()> {
    let store = &inner.store;
    let run = store.require_run(&job.run_id)?;
    let instances = store.instances(&job.run_id)?;
    let mut progress = Progress {
        completed: 0,
        total: instances.len() * job.metrics.len(),
    };
    for metric in &job.metrics {
        match metric.as_str() {
            BLEU => {
                let pairs: Vec<(&str, Option<&str>)> = instances
                    .iter()
                    .map(|i| (i.prediction_text.as_str(), i.reference_text.as_deref()))
                    .collect();
                let report = corpus_bleu(&pairs, DEFAULT_MAX_N, Smoothing::None)?;
                store.set_run_bleu(&run.id, Some(&report))?;
            }
            BASELINE => {
                let mut batch = MetricBatch {
                    replace: Some((BASELINE.to_string(), instances.iter().map(|i| i.id.clone()).collect())),
                    ..Default::default()
                };
                for inst in &instances {
                    let reference = inst.reference_text.as_deref().ok_or_else(|| Error::MissingReference {
                        indices: vec![inst.index],
                    })?;
                    let drafts = baseline_annotate(&inst.prediction_text, reference);
                    let score = annotation_score(drafts.iter().map(|d| d.severity));
                    batch.scores.push(InstanceScore::new(&inst.id, BASELINE, score)?);
                    for d in drafts {
                        batch.annotations.push(d.bind(inst, BASELINE)?);
                    }
                }
                store.apply_metric_batch(&batch)?;
            }
            other => {
                let config = inner
                    .config
                    .adapters
                    .get(other)
                    .ok_or_else(|| Error::AdapterMissing(other.to_string()))?;
                let records = run_adapter(other, config, &run, &instances, &job.device_hints)?;
                ingest_adapter_output(store, &instances, &records, other)?;
            }
        }
        progress.completed += instances.len();
        store.update_job_progress(&job.id, progress)?;
    }
    Ok(())
}

/// Stores one adapter's output as a single atomic batch.
fn ingest_adapter_output(
    store: &Store,
    instances: &[Instance],
    records: &[NumberedRecord],
    metric: &str,
) -> Result<()> {
    let by_index: HashMap<usize, &Instance> = instances.iter().map(|i| (i.index, i)).collect();
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut batch = MetricBatch {
        replace: Some((metric.to_string(), BTreeSet::new())),
        ..Default::default()
    };
    for NumberedRecord { line, record } in records {
        let selector = record.selector().ok_or(Error::MalformedRecord {
            line: *line,
            message: "record needs an 'index' or 'id'".into(),
        })?;
        let instance = match &selector {
            InstanceSelector::Index(i) => by_index.get(i),
            InstanceSelector::Id(id) => by_id.get(id.as_str()),
        }
        .ok_or_else(|| Error::UnknownInstance {
            selector: selector.to_string(),
            record: Some(*line),
        })?;
        let errors = record
            .errors
            .as_ref()
            .map(|raw| raw.iter().map(|r| validate_annotation(r, instance, metric)).collect::<Result<Vec<_>>>())
            .transpose()?;
        let score = record
            .score
            .or_else(|| errors.as_ref().map(|e| annotation_score(e.iter().map(|a| a.severity))));
        if let Some(score) = score {
            batch.scores.push(InstanceScore::new(&instance.id, metric, score)?);
        }
        if let Some(errors) = errors {
            if let Some((_, ids)) = batch.replace.as_mut() {
                ids.insert(instance.id.clone());
            }
            batch.annotations.extend(errors);
        }
    }
    store.apply_metric_batch(&batch)
}
