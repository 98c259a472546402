//! Cross-run grouping by (source, reference) and human ranking feedback.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{metric_family, MetricFamily, BASELINE};
use crate::model::{ErrorAnnotation, Instance, InstanceScore, RankingFeedback, Run};

/// Stable key for a (source, reference) pair; absent text counts as empty.
pub fn group_key(source: Option<&str>, reference: Option<&str>) -> String {
    let mut h = Sha256::new();
    for part in [source.unwrap_or(""), reference.unwrap_or("")] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub run_id: String,
    pub run_name: String,
    pub instance: Instance,
    pub scores: BTreeMap<String, f64>,
    pub annotations: Vec<ErrorAnnotation>,
}

impl GroupMember {
    /// Primary quality score: an InstructScore-family metric if present,
    /// otherwise the baseline annotator's score.
    pub fn annotation_score(&self) -> Option<f64> {
        self.family_score(MetricFamily::Annotation, |m| m != BASELINE)
            .or_else(|| self.scores.get(BASELINE).copied())
    }

    pub fn comet_score(&self) -> Option<f64> {
        self.family_score(MetricFamily::Comet, |_| true)
    }

    fn family_score(&self, family: MetricFamily, keep: impl Fn(&str) -> bool) -> Option<f64> {
        self.scores
            .iter()
            .find(|(m, _)| metric_family(m) == family && keep(m))
            .map(|(_, v)| *v)
    }
}

/// Higher first; a missing score ranks below any present one.
fn desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Best-first member order.
pub fn compare_members(a: &GroupMember, b: &GroupMember) -> Ordering {
    desc(a.annotation_score(), b.annotation_score())
        .then_with(|| desc(a.comet_score(), b.comet_score()))
        .then_with(|| a.run_name.cmp(&b.run_name))
        .then_with(|| a.run_id.cmp(&b.run_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceGroup {
    pub group_key: String,
    pub source_text: Option<String>,
    pub reference_text: Option<String>,
    pub members: Vec<GroupMember>,
}

/// Everything stored for one run, as grouping and search need it.
#[derive(Debug, Clone)]
pub struct RunData {
    pub run: Run,
    pub instances: Vec<Instance>,
    pub scores: Vec<InstanceScore>,
    pub annotations: Vec<ErrorAnnotation>,
}

impl RunData {
    pub fn scores_by_instance(&self) -> HashMap<&str, BTreeMap<String, f64>> {
        let mut out: HashMap<&str, BTreeMap<String, f64>> = HashMap::new();
        for s in &self.scores {
            out.entry(s.instance_id.as_str()).or_default().insert(s.metric.clone(), s.value);
        }
        out
    }

    pub fn annotations_by_instance(&self) -> HashMap<&str, Vec<ErrorAnnotation>> {
        let mut out: HashMap<&str, Vec<ErrorAnnotation>> = HashMap::new();
        for a in &self.annotations {
            out.entry(a.instance_id.as_str()).or_default().push(a.clone());
        }
        out
    }
}

/// Assigns group keys to every instance of the selected runs, in run order
/// then index order. The k-th repeat (k ≥ 1) of a pair within one run gets
/// the key `"<hash>:k"`, so a group never holds two members from one run.
pub fn assign_keys(runs: &[RunData]) -> Vec<Vec<String>> {
    runs.iter()
        .map(|data| {
            let mut seen: HashMap<String, usize> = HashMap::new();
            data.instances
                .iter()
                .map(|inst| {
                    let base = group_key(inst.source_text.as_deref(), inst.reference_text.as_deref());
                    let k = seen.entry(base.clone()).or_insert(0);
                    let key = if *k == 0 { base } else { format!("{base}:{k}") };
                    *k += 1;
                    key
                })
                .collect()
        })
        .collect()
}

/// Groups the instances for which `include(run position, instance position)`
/// holds. Groups come in order of first appearance; members best-first.
pub fn build_groups(runs: &[RunData], include: impl Fn(usize, usize) -> bool) -> Vec<InstanceGroup> {
    let keys = assign_keys(runs);
    let mut order: Vec<InstanceGroup> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (r, data) in runs.iter().enumerate() {
        let scores = data.scores_by_instance();
        let mut annotations = data.annotations_by_instance();
        for (i, inst) in data.instances.iter().enumerate() {
            if !include(r, i) {
                continue;
            }
            let key = &keys[r][i];
            let pos = *slot.entry(key.clone()).or_insert_with(|| {
                order.push(InstanceGroup {
                    group_key: key.clone(),
                    source_text: inst.source_text.clone(),
                    reference_text: inst.reference_text.clone(),
                    members: Vec::new(),
                });
                order.len() - 1
            });
            order[pos].members.push(GroupMember {
                run_id: data.run.id.clone(),
                run_name: data.run.name.clone(),
                instance: inst.clone(),
                scores: scores.get(inst.id.as_str()).cloned().unwrap_or_default(),
                annotations: annotations.remove(inst.id.as_str()).unwrap_or_default(),
            });
        }
    }
    for g in &mut order {
        g.members.sort_by(compare_members);
    }
    order
}

/// Checks that `ordering` names every member run of `group` exactly once.
pub fn check_permutation(group: &InstanceGroup, ordering: &[String]) -> Result<()> {
    let mut expected: Vec<&str> = group.members.iter().map(|m| m.run_id.as_str()).collect();
    let mut given: Vec<&str> = ordering.iter().map(String::as_str).collect();
    expected.sort_unstable();
    given.sort_unstable();
    if expected != given {
        return Err(Error::NotAPermutation);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackOutput {
    pub run_id: String,
    pub run_name: String,
    pub prediction: String,
}

/// A ranking together with the texts it was made on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFeedback {
    pub feedback: RankingFeedback,
    pub source: String,
    pub reference: String,
    pub outputs: Vec<FeedbackOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingSubmission {
    pub group_key: String,
    /// Run ids, best first.
    pub ordering: Vec<String>,
    pub session_id: String,
    pub consented: bool,
    /// The run selection the group was shown for; all runs when absent.
    #[serde(default)]
    pub run_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub stored: bool,
    pub feedback_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeOutcome {
    pub deleted: usize,
}

/// One exported ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackExportRecord {
    pub source: String,
    pub reference: String,
    pub outputs: Vec<FeedbackOutput>,
    pub ranking: Vec<String>,
    pub timestamp: DateTime<Utc>,
}

impl From<StoredFeedback> for FeedbackExportRecord {
    fn from(s: StoredFeedback) -> Self {
        FeedbackExportRecord {
            source: s.source,
            reference: s.reference,
            outputs: s.outputs,
            ranking: s.feedback.ordering,
            timestamp: s.feedback.created_at,
        }
    }
}
