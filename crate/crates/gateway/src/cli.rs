//! The `canvas` command. Subcommands map one-to-one onto API endpoints and
//! call the same [`crate::ops`] functions; `--json` prints exactly what the
//! endpoint would return.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use canvas_core::analytics::DashboardStats;
use canvas_core::engine::SearchResult;
use canvas_core::feedback::{InstanceGroup, RankingSubmission};
use canvas_core::ingestion::{to_jsonl, EvaluationJob, InputFile, JobState};
use canvas_core::metrics::AdapterTable;
use canvas_core::model::Run;
use canvas_core::{Canvas, CanvasConfig, Page, PageRequest};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{GatewayError, Result};
use crate::http::{self, ServeConfig};
use crate::ops::{
    self, AddInstancesRequest, CompareRequest, CreateRunRequest, EvaluateRequest, GroupsRequest, IngestResponse,
    QueryInput, SearchRequest,
};
use crate::table::{float, opt, Table};

pub const DEFAULT_DB: &str = "canvas.db";

#[derive(Debug, Parser)]
#[command(name = "canvas", version, about = "Machine translation evaluation workbench")]
pub struct Cli {
    /// Store file. CANVAS_DB takes precedence.
    #[arg(long, global = true)]
    pub db: Option<PathBuf>,
    /// Adapter table (TOML) mapping metric names to commands.
    #[arg(long, global = true)]
    pub adapters: Option<PathBuf>,
    /// Print structured output instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Acknowledge consented rankings without keeping them.
    #[arg(long, global = true)]
    pub discard_feedback: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8787)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory holding a built UI bundle to serve at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Check that the store opens
    Health,
    /// Create a run.
    CreateRun {
        #[arg(long)]
        name: String,
        /// Source language code, or a direction such as `zh-en`.
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        devices: Vec<String>,
    },
    /// List runs.
    Runs,
    /// Show one run's instances.
    Instances {
        run: String,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long, default_value_t = canvas_core::page::DEFAULT_PAGE_SIZE)]
        page_size: usize,
    },
    /// Append instances from a JSON array or JSON-lines file.
    AddInstances { run: String, file: PathBuf },
    /// Extract instances from files with an extraction spec.
    Ingest {
        run: String,
        #[arg(long)]
        spec: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Load adapter-format score and error records.
    Annotations {
        run: String,
        #[arg(long)]
        origin: String,
        file: PathBuf,
    },
    /// Start an evaluation job and wait for it.
    Evaluate {
        run: String,
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        devices: Vec<String>,
        /// Return the queued job instead of waiting.
        #[arg(long)]
        no_wait: bool,
    },
    /// Show a job.
    Job { id: String },
    /// Query instances across runs.
    Search {
        #[arg(long, value_delimiter = ',')]
        runs: Vec<String>,
        #[arg(long, default_value = "")]
        query: String,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long, default_value_t = canvas_core::page::DEFAULT_PAGE_SIZE)]
        page_size: usize,
    },
    /// Dashboard statistics for one run.
    Summary { run: String },
    /// Side-by-side statistics for several runs.
    Stats {
        #[arg(long, value_delimiter = ',', required = true)]
        runs: Vec<String>,
    },
    /// Instances grouped by source and reference.
    Groups {
        #[arg(long, value_delimiter = ',')]
        runs: Vec<String>,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long, default_value_t = canvas_core::page::DEFAULT_PAGE_SIZE)]
        page_size: usize,
    },
    /// Submit a ranking of a group's outputs, best first.
    Rank {
        #[arg(long)]
        group: String,
        #[arg(long, value_delimiter = ',', required = true)]
        order: Vec<String>,
        #[arg(long)]
        session: String,
        #[arg(long)]
        consent: bool,
        #[arg(long, value_delimiter = ',')]
        runs: Vec<String>,
    },
    /// Delete every ranking from a session.
    Revoke { session: String },
    /// Print consented rankings as JSON lines.
    ExportFeedback,
    /// Print a run as JSON lines.
    Export { run: String },
    /// Append records from a run export.
    Import { run: String, file: PathBuf },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            if cli.json {
                eprintln!("{}", serde_json::to_string(&e.body()).unwrap_or_default());
            } else {
                eprintln!("error[{}]: {e}", e.code());
            }
            1
        }
    }
}

fn db_path(cli: &Cli) -> PathBuf {
    std::env::var_os("CANVAS_DB")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| cli.db.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DB))
}

fn config(cli: &Cli, serving: bool) -> Result<CanvasConfig> {
    let adapters = match &cli.adapters {
        Some(path) => AdapterTable::load(path)?,
        None => AdapterTable::new(),
    };
    Ok(CanvasConfig {
        adapters,
        retain_feedback: !cli.discard_feedback,
        workers: if serving { CanvasConfig::default().workers } else { 1 },
        recover_jobs: serving,
        ..CanvasConfig::default()
    })
}

fn open(cli: &Cli) -> Result<Canvas> {
    let path = db_path(cli);
    Canvas::open(&path, config(cli, false)?).map_err(|source| GatewayError::StorageUnwritable {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| GatewayError::Input {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| {
        canvas_core::Error::NonTextPayload {
            field: path.display().to_string(),
        }
        .into()
    })
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce(&T) -> String) -> Result<String> {
    if json {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| GatewayError::Task(e.to_string()))?;
        s.push('\n');
        Ok(s)
    } else {
        Ok(human(value))
    }
}

pub fn run(cli: &Cli) -> Result<String> {
    if let Command::Serve { port, host, ui_dir } = &cli.command {
        let config = ServeConfig {
            host: host.clone(),
            port: *port,
            db: db_path(cli),
            canvas: config(cli, true)?,
            ui_dir: ui_dir.clone(),
        };
        let rt = tokio::runtime::Runtime::new()?;
        rt.block_on(http::serve(config))?;
        return Ok(String::new());
    }
    let c = open(cli)?;
    let json = cli.json;
    match &cli.command {
        Command::Serve { .. } => unreachable!("handled above"),
        Command::Health => emit(json, &ops::health(&c)?, |h| {
            format!("status {}  version {}  schema {}\n", h.status, h.version, h.schema_version)
        }),
        Command::CreateRun {
            name,
            source,
            target,
            metrics,
            devices,
        } => {
            let (source_lang, target_lang) = match target {
                Some(t) => (source.clone(), t.clone()),
                None => {
                    let lang = canvas_core::model::LanguagePair::parse_direction(source)?;
                    (lang.source_lang, lang.target_lang)
                }
            };
            let req = CreateRunRequest {
                name: name.clone(),
                source_lang,
                target_lang,
                metrics: metrics.clone(),
                device_hints: devices.clone(),
            };
            emit(json, &ops::create_run(&c, &req)?, |r| runs_table(std::slice::from_ref(r)))
        }
        Command::Runs => emit(json, &ops::list_runs(&c)?, |runs| runs_table(runs)),
        Command::Instances { run, page, page_size } => {
            let page = PageRequest {
                page: *page,
                page_size: *page_size,
            };
            emit(json, &ops::list_instances(&c, run, page)?, |p| {
                let mut t = Table::new(&["index", "source", "prediction", "reference"]);
                for i in &p.items {
                    t.row([
                        i.index.to_string(),
                        opt(i.source_text.as_deref()),
                        i.prediction_text.clone(),
                        opt(i.reference_text.as_deref()),
                    ]);
                }
                format!("{}{}", t.render(), page_line(p))
            })
        }
        Command::AddInstances { run, file } => {
            let req = parse_instances(&read_text(file)?)?;
            emit(json, &ops::add_instances(&c, run, req)?, |o| added_text(o))
        }
        Command::Ingest {
            run,
            spec,
            files,
            dry_run,
        } => {
            let spec = read_text(spec)?;
            let files = files
                .iter()
                .map(|p| Ok(InputFile::new(p.display().to_string(), read(p)?)))
                .collect::<Result<Vec<_>>>()?;
            emit(json, &ops::ingest(&c, run, &spec, &files, *dry_run)?, |r| match r {
                IngestResponse::Added(o) => added_text(o),
                IngestResponse::Preview(p) => {
                    let mut t = Table::new(&["source", "prediction", "reference"]);
                    for d in &p.records {
                        t.row([opt(d.source.as_deref()), d.prediction.clone(), opt(d.reference.as_deref())]);
                    }
                    format!("{} record(s) would be added\n{}", p.count, t.render())
                }
            })
        }
        Command::Annotations { run, origin, file } => {
            let text = read_text(file)?;
            emit(json, &ops::ingest_annotations(&c, run, origin, &text)?, |n| {
                format!(
                    "scores added {}  errors added {}  skipped {}\n",
                    n.scores_added, n.errors_added, n.skipped
                )
            })
        }
        Command::Evaluate {
            run,
            metrics,
            devices,
            no_wait,
        } => {
            let req = EvaluateRequest {
                metrics: metrics.clone(),
                device_hints: devices.clone(),
            };
            let mut job = ops::evaluate(&c, run, &req)?;
            if !no_wait {
                while !job.state.is_terminal() {
                    job = c.wait_for_job(&job.id, Duration::from_secs(3600))?;
                }
            }
            let text = emit(json, &job, |j| job_table(j))?;
            if job.state == JobState::Failed {
                print!("{text}");
                return Err(GatewayError::JobFailed {
                    job_id: job.id,
                    diagnostics: job.diagnostics,
                });
            }
            Ok(text)
        }
        Command::Job { id } => emit(json, &ops::job(&c, id)?, |j| job_table(j)),
        Command::Search {
            runs,
            query,
            page,
            page_size,
        } => {
            let req = SearchRequest {
                query: Some(QueryInput::Text(query.clone())),
                run_ids: runs.clone(),
                page: PageRequest {
                    page: *page,
                    page_size: *page_size,
                },
            };
            emit(json, &ops::search(&c, &req)?, |r| search_text(r))
        }
        Command::Summary { run } => emit(json, &ops::summary(&c, run)?, |s| stats_text(std::slice::from_ref(s))),
        Command::Stats { runs } => {
            let req = CompareRequest { run_ids: runs.clone() };
            emit(json, &ops::compare(&c, &req)?, |s| stats_text(s))
        }
        Command::Groups { runs, page, page_size } => {
            let req = GroupsRequest {
                run_ids: runs.clone(),
                page: PageRequest {
                    page: *page,
                    page_size: *page_size,
                },
            };
            emit(json, &ops::groups(&c, &req)?, |p| {
                format!("{}{}", groups_table(&p.items, &Default::default()), page_line(p))
            })
        }
        Command::Rank {
            group,
            order,
            session,
            consent,
            runs,
        } => {
            let req = RankingSubmission {
                group_key: group.clone(),
                ordering: order.clone(),
                session_id: session.clone(),
                consented: *consent,
                run_ids: (!runs.is_empty()).then(|| runs.clone()),
            };
            emit(json, &ops::submit_ranking(&c, &req)?, |o| match &o.feedback_id {
                Some(id) => format!("stored ranking {id}\n"),
                None => "ranking accepted, not stored\n".to_string(),
            })
        }
        Command::Revoke { session } => emit(json, &ops::revoke_feedback(&c, session)?, |o| {
            format!("deleted {} ranking(s)\n", o.deleted)
        }),
        Command::ExportFeedback => Ok(to_jsonl(&ops::export_feedback(&c)?)),
        Command::Export { run } => Ok(to_jsonl(&ops::export_run(&c, run)?)),
        Command::Import { run, file } => {
            let text = read_text(file)?;
            emit(json, &ops::import_run(&c, run, &text)?, |o| {
                format!(
                    "imported {} instance(s), {} score(s), {} annotation(s)\n",
                    o.instances, o.scores, o.annotations
                )
            })
        }
    }
}

/// A JSON array or object, or else one instance object per line.
fn parse_instances(text: &str) -> Result<AddInstancesRequest> {
    let trimmed = text.trim_start_matches('\u{feff}').trim_start();
    if trimmed.starts_with('[') {
        return ops::parse_json(trimmed.as_bytes());
    }
    let mut instances = Vec::new();
    for line in trimmed.lines().filter(|l| !l.trim().is_empty()) {
        instances.push(ops::parse_json(line.as_bytes())?);
    }
    Ok(AddInstancesRequest::Bare(instances))
}

fn page_line<T>(p: &Page<T>) -> String {
    format!("page {} ({} per page), {} total\n", p.page, p.page_size, p.total)
}

fn runs_table(runs: &[Run]) -> String {
    let mut t = Table::new(&["id", "name", "lang", "status", "instances", "bleu", "metrics"]);
    for r in runs {
        t.row([
            r.id.clone(),
            r.name.clone(),
            format!("{}-{}", r.lang.source_lang, r.lang.target_lang),
            r.status.as_str().to_string(),
            r.instance_count.to_string(),
            opt(r.bleu.as_ref().map(|b| float(b.score))),
            r.requested_metrics.iter().cloned().collect::<Vec<_>>().join(","),
        ]);
    }
    t.render()
}

fn added_text(o: &canvas_core::ingestion::AddOutcome) -> String {
    let mut s = format!("added {} instance(s) starting at index {}\n", o.count, o.first_index);
    for w in &o.warnings {
        s.push_str(&format!("warning: instance {}: {:?}\n", w.index, w.warning));
    }
    s
}

fn job_table(j: &EvaluationJob) -> String {
    let mut t = Table::new(&["job", "run", "metrics", "state", "progress", "diagnostics"]);
    t.row([
        j.id.clone(),
        j.run_id.clone(),
        j.metrics.join(","),
        j.state.as_str().to_string(),
        format!("{}/{}", j.progress.completed, j.progress.total),
        j.diagnostics.clone(),
    ]);
    t.render()
}

fn groups_table(groups: &[InstanceGroup], highlight: &std::collections::BTreeSet<String>) -> String {
    let mut t = Table::new(&["group", "run", "index", "prediction", "errors", "matched"]);
    for g in groups {
        for (k, m) in g.members.iter().enumerate() {
            let key = if k == 0 { g.group_key.chars().take(12).collect() } else { String::new() };
            let matched = m.annotations.iter().filter(|a| highlight.contains(&a.id)).count();
            t.row([
                key,
                m.run_name.clone(),
                m.instance.index.to_string(),
                m.instance.prediction_text.clone(),
                m.annotations.len().to_string(),
                matched.to_string(),
            ]);
        }
    }
    t.render()
}

fn search_text(r: &SearchResult) -> String {
    format!(
        "{} group(s) match ({} instance(s), {} highlighted error(s))\n{}page {} ({} per page)\n",
        r.total,
        r.matched_instances,
        r.matched_error_ids.len(),
        groups_table(&r.groups, &r.matched_error_ids),
        r.page,
        r.page_size
    )
}

fn stats_text(stats: &[DashboardStats]) -> String {
    let mut out = String::new();
    let mut overview = Table::new(&["run", "name", "instances", "bleu", "annotations"]);
    let mut metrics = Table::new(&["run", "metric", "mean", "lo", "hi", "n"]);
    let mut errors = Table::new(&["run", "error type", "count"]);
    for s in stats {
        overview.row([
            s.run_id.clone(),
            s.run_name.clone(),
            s.instance_count.to_string(),
            opt(s.corpus_bleu.as_ref().map(|b| float(b.score))),
            s.annotation_count.to_string(),
        ]);
        for (m, mean) in &s.mean_scores {
            let h = &s.histograms[m];
            metrics.row([
                s.run_name.clone(),
                m.clone(),
                float(*mean),
                float(h.lo),
                float(h.hi),
                h.total.to_string(),
            ]);
        }
        for e in &s.error_type_counts {
            errors.row([s.run_name.clone(), e.error_type.clone(), e.count.to_string()]);
        }
    }
    out.push_str(&overview.render());
    if !metrics.is_empty() {
        out.push('\n');
        out.push_str(&metrics.render());
    }
    if !errors.is_empty() {
        out.push('\n');
        out.push_str(&errors.render());
    }
    out
}
