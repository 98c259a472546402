//! Corpus summaries, score histograms and error-type distributions.
//!
//! Nothing here computes a metric; it only aggregates what is stored.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BleuReport;
use crate::model::{ErrorAnnotation, InstanceScore, Run};

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    #[serde(default)]
    pub metric: String,
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<Bin>,
    pub total: usize,
}

/// Equal-width histogram over `range`, or over `[min, max]` of the values.
///
/// Bin `i` covers `[lower, upper)` except the last, which also takes `hi`.
/// Values outside an explicit range are counted in the nearest end bin.
/// When `lo == hi` every value lands in the last bin.
pub fn histogram(values: &[f64], bin_count: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::InvalidBinCount);
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScore {
            metric: format!("histogram value {bad}"),
        });
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidRange { lo, hi });
            }
            (lo, hi)
        }
        None if values.is_empty() => (0.0, 0.0),
        None => values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
    };

    let width = (hi - lo) / bin_count as f64;
    let edge = |i: usize| if i == bin_count { hi } else { lo + width * i as f64 };
    let mut bins: Vec<Bin> = (0..bin_count)
        .map(|i| Bin {
            lower: edge(i),
            upper: edge(i + 1),
            count: 0,
        })
        .collect();

    for &v in values {
        let i = if width <= 0.0 || v >= hi {
            bin_count - 1
        } else if v <= lo {
            0
        } else {
            // the float estimate can be off by one near an edge; settle it
            // against the edges that are reported
            let mut i = (((v - lo) / width) as usize).min(bin_count - 1);
            while i > 0 && v < bins[i].lower {
                i -= 1;
            }
            while i + 1 < bin_count && v >= bins[i + 1].lower {
                i += 1;
            }
            i
        };
        bins[i].count += 1;
    }

    Ok(Histogram {
        metric: String::new(),
        lo,
        hi,
        bins,
        total: values.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTypeCount {
    pub error_type: String,
    pub count: usize,
}

/// Counts annotations per type, most frequent first, ties by type name.
pub fn error_type_counts<'a>(annotations: impl IntoIterator<Item = &'a ErrorAnnotation>) -> Vec<ErrorTypeCount> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for a in annotations {
        *counts.entry(a.error_type.as_str()).or_default() += 1;
    }
    let mut out: Vec<ErrorTypeCount> = counts
        .into_iter()
        .map(|(t, count)| ErrorTypeCount {
            error_type: t.to_string(),
            count,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.error_type.cmp(&b.error_type)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardStats {
    pub run_id: String,
    pub run_name: String,
    pub instance_count: usize,
    pub corpus_bleu: Option<BleuReport>,
    /// Arithmetic mean of the instance scores of each metric.
    pub mean_scores: BTreeMap<String, f64>,
    pub histograms: BTreeMap<String, Histogram>,
    pub annotation_count: usize,
    pub error_type_counts: Vec<ErrorTypeCount>,
}

fn scores_by_metric(scores: &[InstanceScore]) -> BTreeMap<String, Vec<f64>> {
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in scores {
        by_metric.entry(s.metric.clone()).or_default().push(s.value);
    }
    by_metric
}

/// Aggregates one run. `ranges` fixes the histogram range per metric;
/// metrics without an entry use their own `[min, max]`.
pub fn summarize(
    run: &Run,
    scores: &[InstanceScore],
    annotations: &[ErrorAnnotation],
    ranges: &BTreeMap<String, (f64, f64)>,
    bins: usize,
) -> Result<DashboardStats> {
    let mut mean_scores = BTreeMap::new();
    let mut histograms = BTreeMap::new();
    for (metric, values) in scores_by_metric(scores) {
        mean_scores.insert(metric.clone(), values.iter().sum::<f64>() / values.len() as f64);
        let mut h = histogram(&values, bins, ranges.get(&metric).copied())?;
        h.metric = metric.clone();
        histograms.insert(metric, h);
    }
    Ok(DashboardStats {
        run_id: run.id.clone(),
        run_name: run.name.clone(),
        instance_count: run.instance_count,
        corpus_bleu: run.bleu.clone(),
        mean_scores,
        histograms,
        annotation_count: annotations.len(),
        error_type_counts: error_type_counts(annotations),
    })
}

/// Per-metric `(min, max)` across several runs' scores.
pub fn shared_ranges<'a>(score_sets: impl IntoIterator<Item = &'a [InstanceScore]>) -> BTreeMap<String, (f64, f64)> {
    let mut ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for scores in score_sets {
        for s in scores {
            let r = ranges.entry(s.metric.clone()).or_insert((s.value, s.value));
            r.0 = r.0.min(s.value);
            r.1 = r.1.max(s.value);
        }
    }
    ranges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_values_share_one_bin() {
        let h = histogram(&[3.5; 10], 20, None).unwrap();
        assert_eq!(h.total, 10);
        assert_eq!(h.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(h.bins.last().unwrap().count, 10);
    }

    #[test]
    fn one_per_bin() {
        let values: Vec<f64> = (0..20).map(f64::from).collect();
        let h = histogram(&values, 20, Some((0.0, 19.0))).unwrap();
        assert!(h.bins.iter().all(|b| b.count == 1), "{:?}", h.bins);
    }

    #[test]
    fn empty_input() {
        let h = histogram(&[], 20, None).unwrap();
        assert_eq!(h.total, 0);
        assert_eq!((h.lo, h.hi), (0.0, 0.0));
        assert_eq!(h.bins.len(), 20);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(histogram(&[1.0], 0, None), Err(Error::InvalidBinCount)));
        assert!(matches!(histogram(&[1.0], 5, Some((2.0, 1.0))), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn bins_are_contiguous() {
        let h = histogram(&[-7.0, -3.0, 0.0, -1.0], 6, None).unwrap();
        assert_eq!(h.bins[0].lower, -7.0);
        assert_eq!(h.bins.last().unwrap().upper, 0.0);
        for pair in h.bins.windows(2) {
            assert_eq!(pair[0].upper, pair[1].lower);
        }
        assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), 4);
    }

    #[test]
    fn error_types_sorted() {
        let ann = |t: &str| ErrorAnnotation {
            id: String::new(),
            instance_id: String::new(),
            error_type: t.into(),
            severity: crate::model::Severity::Minor,
            span: crate::model::Span::new(0, 0),
            explanation: String::new(),
            origin: String::new(),
        };
        let anns = vec![
            ann("missing content"),
            ann("extraneous content"),
            ann("missing content"),
            ann("b"),
            ann("missing content"),
            ann("a"),
        ];
        let counts = error_type_counts(&anns);
        let flat: Vec<(&str, usize)> = counts.iter().map(|c| (c.error_type.as_str(), c.count)).collect();
        assert_eq!(flat, vec![("missing content", 3), ("a", 1), ("b", 1), ("extraneous content", 1)]);
    }
}
