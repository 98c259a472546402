//! Request types and the operations behind both the HTTP API and the CLI.
//! Each function here is the single implementation of one endpoint.

use canvas_core::analytics::DashboardStats;
use canvas_core::engine::{Health, SearchResult};
use canvas_core::feedback::{FeedbackExportRecord, InstanceGroup, RankingSubmission, RevokeOutcome, SubmitOutcome};
use canvas_core::ingestion::{
    parse_export, AddOutcome, AnnotationCounts, EvaluationJob, ExportRecord, ExtractionSpec, ImportOutcome,
    IngestPreview, InputFile,
};
use canvas_core::metrics::parse_records_str;
use canvas_core::model::{Instance, LanguagePair, RawInstance, Run};
use canvas_core::search::{parse_query, SearchQuery};
use canvas_core::{Canvas, Page, PageRequest};
use serde::{Deserialize, Serialize};

use crate::error::{body_error, GatewayError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateRunRequest {
    pub name: String,
    pub source_lang: String,
    pub target_lang: String,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub device_hints: Vec<String>,
}

/// Either `{"instances": [...]}` or a bare array.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AddInstancesRequest {
    Wrapped { instances: Vec<RawInstance> },
    Bare(Vec<RawInstance>),
}

impl AddInstancesRequest {
    pub fn into_instances(self) -> Vec<RawInstance> {
        match self {
            AddInstancesRequest::Wrapped { instances } | AddInstancesRequest::Bare(instances) => instances,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub device_hints: Vec<String>,
}

/// Query text in the `field ~ 'pattern'` syntax, or its parsed form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryInput {
    Text(String),
    Structured(SearchQuery),
}

impl QueryInput {
    pub fn resolve(&self) -> Result<SearchQuery> {
        match self {
            QueryInput::Text(t) => Ok(parse_query(t).map_err(canvas_core::Error::from)?),
            QueryInput::Structured(q) => Ok(q.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub query: Option<QueryInput>,
    #[serde(default)]
    pub run_ids: Vec<String>,
    #[serde(flatten)]
    pub page: PageRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub run_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupsRequest {
    pub run_ids: Vec<String>,
    pub page: PageRequest,
}

/// Outcome of a file upload: a preview when dry-running, else what was added.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IngestResponse {
    Added(AddOutcome),
    Preview(IngestPreview),
}

/// Splits a comma-separated list, dropping empty items.
pub fn split_csv(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| body_error(&e))
}

pub fn health(c: &Canvas) -> Result<Health> {
    Ok(c.health()?)
}

pub fn create_run(c: &Canvas, req: &CreateRunRequest) -> Result<Run> {
    let lang = LanguagePair::new(&req.source_lang, &req.target_lang)?;
    if req.name.trim().is_empty() {
        return Err(GatewayError::invalid("run name must not be empty"));
    }
    Ok(c.create_run(req.name.trim(), lang, &req.metrics, &req.device_hints)?)
}

pub fn list_runs(c: &Canvas) -> Result<Vec<Run>> {
    Ok(c.list_runs()?)
}

pub fn get_run(c: &Canvas, run_id: &str) -> Result<Run> {
    Ok(c.get_run(run_id)?)
}

pub fn list_instances(c: &Canvas, run_id: &str, page: PageRequest) -> Result<Page<Instance>> {
    page.check()?;
    Ok(page.slice(c.instances(run_id)?)?)
}

pub fn add_instances(c: &Canvas, run_id: &str, req: AddInstancesRequest) -> Result<AddOutcome> {
    Ok(c.add_instances(run_id, &req.into_instances())?)
}

pub fn ingest(c: &Canvas, run_id: &str, spec: &str, files: &[InputFile], dry_run: bool) -> Result<IngestResponse> {
    let spec = ExtractionSpec::from_json(spec)?;
    if files.is_empty() {
        return Err(GatewayError::invalid("no files uploaded"));
    }
    if dry_run {
        c.get_run(run_id)?;
        spec.check()?;
        Ok(IngestResponse::Preview(c.preview_file(files, &spec)?))
    } else {
        Ok(IngestResponse::Added(c.ingest_file(run_id, files, &spec)?))
    }
}

pub fn ingest_annotations(c: &Canvas, run_id: &str, origin: &str, text: &str) -> Result<AnnotationCounts> {
    let records = parse_records_str(text)?;
    Ok(c.ingest_annotations(run_id, &records, origin)?)
}

pub fn evaluate(c: &Canvas, run_id: &str, req: &EvaluateRequest) -> Result<EvaluationJob> {
    Ok(c.start_evaluation(run_id, &req.metrics, &req.device_hints)?)
}

pub fn job(c: &Canvas, job_id: &str) -> Result<EvaluationJob> {
    Ok(c.job_status(job_id)?)
}

pub fn search(c: &Canvas, req: &SearchRequest) -> Result<SearchResult> {
    let query = match &req.query {
        Some(q) => q.resolve()?,
        None => SearchQuery::match_all(),
    };
    Ok(c.search(&query, &req.run_ids, req.page)?)
}

pub fn summary(c: &Canvas, run_id: &str) -> Result<DashboardStats> {
    Ok(c.run_summary(run_id)?)
}

pub fn compare(c: &Canvas, req: &CompareRequest) -> Result<Vec<DashboardStats>> {
    Ok(c.compare_runs(&req.run_ids)?)
}

pub fn groups(c: &Canvas, req: &GroupsRequest) -> Result<Page<InstanceGroup>> {
    Ok(c.group_instances(&req.run_ids, req.page)?)
}

pub fn submit_ranking(c: &Canvas, req: &RankingSubmission) -> Result<SubmitOutcome> {
    Ok(c.submit_ranking(req)?)
}

pub fn revoke_feedback(c: &Canvas, session_id: &str) -> Result<RevokeOutcome> {
    Ok(c.revoke_feedback(session_id)?)
}

pub fn export_feedback(c: &Canvas) -> Result<Vec<FeedbackExportRecord>> {
    Ok(c.export_feedback()?)
}

pub fn export_run(c: &Canvas, run_id: &str) -> Result<Vec<ExportRecord>> {
    Ok(c.export_run(run_id)?)
}

pub fn import_run(c: &Canvas, run_id: &str, text: &str) -> Result<ImportOutcome> {
    let records = parse_export(text)?;
    Ok(c.import_run(run_id, &records)?)
}
