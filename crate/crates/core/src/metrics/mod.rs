pub mod adapter;
pub mod annotate;
pub mod bleu;
pub mod tokenize;

pub use adapter::{
    parse_records, parse_records_str, run_adapter, AdapterConfig, AdapterInput, AdapterRecord, AdapterTable,
    InstanceSelector, NumberedRecord,
};
pub use annotate::{annotation_score, baseline_annotate, EXTRANEOUS_CONTENT, MISSING_CONTENT};
pub use bleu::{corpus_bleu, BleuReport, Smoothing, DEFAULT_MAX_N};
pub use tokenize::tokenize;

/// Built-in corpus BLEU.
pub const BLEU: &str = "bleu";
/// Built-in LCS annotator.
pub const BASELINE: &str = "baseline";

/// Ordering families for instance quality comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricFamily {
    /// Scores derived from error annotations (InstructScore and the baseline).
    Annotation,
    Comet,
    Other,
}

pub fn metric_family(metric: &str) -> MetricFamily {
    if metric.starts_with("instructscore") || metric == BASELINE {
        MetricFamily::Annotation
    } else if metric.starts_with("comet") {
        MetricFamily::Comet
    } else {
        MetricFamily::Other
    }
}

pub fn is_builtin(metric: &str) -> bool {
    metric == BLEU || metric == BASELINE
}
