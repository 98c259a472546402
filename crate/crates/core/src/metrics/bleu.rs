//! Corpus BLEU over the built-in tokenizer.
//!
//! Scores are only comparable with other scores produced by this tool since
//! tokenization is fixed and intentionally simple.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Adds one to numerator and denominator of every order with no matches.
    AddOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// 0..=100
    pub score: f64,
    /// Clipped precision for n = 1..=max_n.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
}

/// Clipped n-gram statistics for one sentence pair, summed over the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct NgramStats {
    matches: Vec<u64>,
    totals: Vec<u64>,
    hyp_len: usize,
    ref_len: usize,
}

impl NgramStats {
    fn new(max_n: usize) -> Self {
        NgramStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            ..Default::default()
        }
    }

    fn add_pair(&mut self, hyp: &[String], reference: &[String]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=self.matches.len() {
            let ref_counts = ngram_counts(reference, n);
            let hyp_counts = ngram_counts(hyp, n);
            let clipped: usize = hyp_counts
                .iter()
                .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum();
            self.matches[n - 1] += clipped as u64;
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over `(prediction, reference)` pairs.
///
/// Statistics are pooled over the whole corpus before precisions are taken.
/// An order with no hypothesis n-grams has precision 0. Without smoothing,
/// any zero precision yields a score of 0.
pub fn corpus_bleu(pairs: &[(&str, Option<&str>)], max_n: usize, smoothing: Smoothing) -> Result<BleuReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let missing: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| r.is_none())
        .map(|(i, _)| i)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingReference { indices: missing });
    }
    let tokenized: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(h, r)| (tokenize(h), tokenize(r.unwrap_or_default())))
        .collect();
    corpus_bleu_tokens(&tokenized, max_n, smoothing)
}

pub fn corpus_bleu_tokens(pairs: &[(Vec<String>, Vec<String>)], max_n: usize, smoothing: Smoothing) -> Result<BleuReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if max_n == 0 {
        return Err(Error::Config("BLEU max_n must be at least 1".into()));
    }
    let mut stats = NgramStats::new(max_n);
    for (hyp, reference) in pairs {
        stats.add_pair(hyp, reference);
    }
    Ok(report_from_stats(&stats, smoothing))
}

fn report_from_stats(stats: &NgramStats, smoothing: Smoothing) -> BleuReport {
    let precisions: Vec<f64> = stats
        .matches
        .iter()
        .zip(&stats.totals)
        .map(|(&m, &t)| match (smoothing, m) {
            (Smoothing::AddOne, 0) => 1.0 / (t as f64 + 1.0),
            _ if t == 0 => 0.0,
            _ => m as f64 / t as f64,
        })
        .collect();

    let brevity_penalty = brevity_penalty(stats.hyp_len, stats.ref_len);

    let score = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };

    BleuReport {
        score,
        precisions,
        brevity_penalty,
        hyp_length: stats.hyp_len,
        ref_length: stats.ref_len,
    }
}

/// `exp(1 - r/h)` when the hypothesis is not longer than the reference.
/// An empty hypothesis against a non-empty reference gets 0.
pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len > ref_len {
        1.0
    } else if hyp_len == 0 {
        if ref_len == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_corpus_scores_100() {
        let pairs = [
            ("the quick brown fox jumps", Some("the quick brown fox jumps")),
            ("a b c d", Some("a b c d")),
        ];
        let r = corpus_bleu(&pairs, 4, Smoothing::None).unwrap();
        assert_eq!(r.score, 100.0);
        assert_eq!(r.precisions, vec![1.0; 4]);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn cat_on_the_mat_hand_count() {
        // Hand count: unigrams the×2 cat on mat = 5/6; bigrams "the cat",
        // "on the", "the mat" = 3/5; trigram "on the mat" = 1/4; no 4-gram.
        let pairs = [("the cat sat on the mat", Some("the cat is on the mat"))];
        let r = corpus_bleu(&pairs, 4, Smoothing::None).unwrap();
        assert_eq!(r.precisions, vec![5.0 / 6.0, 3.0 / 5.0, 1.0 / 4.0, 0.0]);
        assert_eq!(r.brevity_penalty, 1.0);
        assert_eq!(r.score, 0.0);
        assert_eq!((r.hyp_length, r.ref_length), (6, 6));

        let smoothed = corpus_bleu(&pairs, 4, Smoothing::AddOne).unwrap();
        assert_eq!(smoothed.precisions[3], 1.0 / 4.0);
        let mean_log = ((5.0f64 / 6.0).ln() + 0.6f64.ln() + 0.25f64.ln() + 0.25f64.ln()) / 4.0;
        assert!((smoothed.score - 100.0 * mean_log.exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let pairs = [("", Some("a b c")), ("", Some("d e"))];
        let r = corpus_bleu(&pairs, 4, Smoothing::None).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.hyp_length, 0);
        assert_eq!(r.brevity_penalty, 0.0);
    }

    #[test]
    fn short_hypothesis_is_penalized() {
        let pairs = [("a b c d", Some("a b c d e f g h"))];
        let r = corpus_bleu(&pairs, 4, Smoothing::None).unwrap();
        let bp = (1.0f64 - 8.0 / 4.0).exp();
        assert_eq!(r.brevity_penalty, bp);
        assert!((r.score - 100.0 * bp).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(corpus_bleu(&[], 4, Smoothing::None), Err(Error::EmptyCorpus)));
        let pairs = [("a", Some("a")), ("b", None), ("c", None)];
        match corpus_bleu(&pairs, 4, Smoothing::None) {
            Err(Error::MissingReference { indices }) => assert_eq!(indices, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clipping_limits_repeats() {
        let pairs = [("the the the the", Some("the cat"))];
        let r = corpus_bleu(&pairs, 1, Smoothing::None).unwrap();
        assert_eq!(r.precisions, vec![0.25]);
    }
}
