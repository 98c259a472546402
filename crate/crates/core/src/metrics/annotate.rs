//! Annotation-derived scores and the offline LCS baseline annotator.

use crate::model::{AnnotationDraft, Severity, Span};

use super::tokenize::{tokenize_spans, Token};

pub const MAJOR_WEIGHT: f64 = 5.0;
pub const MINOR_WEIGHT: f64 = 1.0;

/// Runs of at least this many tokens are reported as major errors.
pub const MAJOR_RUN_TOKENS: usize = 3;

pub const MISSING_CONTENT: &str = "missing content";
pub const EXTRANEOUS_CONTENT: &str = "extraneous content";

/// `-(5 * majors + 1 * minors)`. Only used when an annotator supplies errors
/// without a score of its own.
pub fn annotation_score<I>(severities: I) -> f64
where
    I: IntoIterator<Item = Severity>,
{
    -severities
        .into_iter()
        .map(|s| match s {
            Severity::Major => MAJOR_WEIGHT,
            Severity::Minor => MINOR_WEIGHT,
        })
        .sum::<f64>()
}

/// Aligns prediction and reference tokens by longest common subsequence and
/// reports each maximal unaligned run.
///
/// Unaligned reference runs become zero-width "missing content" anchors at
/// the start of the next aligned prediction token, or at the end of the
/// prediction when nothing aligned follows. Unaligned prediction runs become
/// "extraneous content" spans covering those tokens.
pub fn baseline_annotate(prediction: &str, reference: &str) -> Vec<AnnotationDraft> {
    let hyp = tokenize_spans(prediction);
    let refs = tokenize_spans(reference);
    let aligned = lcs_alignment(&hyp, &refs);
    let pred_len = prediction.chars().count();

    let mut out = Vec::new();
    let (mut h, mut r) = (0, 0);
    // sentinel pair closes the final gap
    let sentinel = (hyp.len(), refs.len());
    for &(ah, ar) in aligned.iter().chain(std::iter::once(&sentinel)) {
        if ah > h {
            let run = &hyp[h..ah];
            out.push(AnnotationDraft {
                error_type: EXTRANEOUS_CONTENT.to_string(),
                severity: severity_for(run.len()),
                span: Span::new(run[0].start, run[run.len() - 1].end),
                explanation: format!(
                    "The translation contains \"{}\", which has no counterpart in the reference.",
                    join(run)
                ),
            });
        }
        if ar > r {
            let run = &refs[r..ar];
            let anchor = if ah < hyp.len() { hyp[ah].start } else { pred_len };
            out.push(AnnotationDraft {
                error_type: MISSING_CONTENT.to_string(),
                severity: severity_for(run.len()),
                span: Span::new(anchor, anchor),
                explanation: format!("The translation is missing \"{}\" from the reference.", join(run)),
            });
        }
        h = ah + 1;
        r = ar + 1;
    }
    out
}

fn severity_for(run_len: usize) -> Severity {
    if run_len >= MAJOR_RUN_TOKENS {
        Severity::Major
    } else {
        Severity::Minor
    }
}

fn join(tokens: &[Token<'_>]) -> String {
    tokens.iter().map(|t| t.text).collect::<Vec<_>>().join(" ")
}

/// Index pairs `(hyp, ref)` of one longest common subsequence, increasing in
/// both coordinates. Ties prefer the earliest match.
fn lcs_alignment(hyp: &[Token<'_>], refs: &[Token<'_>]) -> Vec<(usize, usize)> {
    let (n, m) = (hyp.len(), refs.len());
    let width = m + 1;
    // suffix table: lcs[i][j] = LCS length of hyp[i..] and refs[j..]
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if hyp[i].text == refs[j].text {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }

    let mut pairs = Vec::with_capacity(lcs[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if hyp[i].text == refs[j].text {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[(i + 1) * width + j] >= lcs[i * width + j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_weights() {
        assert_eq!(annotation_score([]), 0.0);
        assert_eq!(annotation_score([Severity::Major]), -5.0);
        let mixed = [Severity::Major, Severity::Minor, Severity::Major, Severity::Minor, Severity::Minor];
        assert_eq!(annotation_score(mixed), -13.0);
    }

    #[test]
    fn identical_texts_have_no_errors() {
        assert!(baseline_annotate("a b c", "a b c").is_empty());
        assert!(baseline_annotate("", "").is_empty());
    }

    #[test]
    fn truncated_tail_is_missing_at_end() {
        let anns = baseline_annotate("a b c", "a b c d e");
        assert_eq!(anns.len(), 1);
        let a = &anns[0];
        assert_eq!(a.error_type, MISSING_CONTENT);
        assert_eq!(a.span, Span::new(5, 5));
        assert_eq!(a.severity, Severity::Minor);
        assert!(a.explanation.contains("d e"));
    }

    #[test]
    fn inserted_token_is_extraneous() {
        let anns = baseline_annotate("a x b", "a b");
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].error_type, EXTRANEOUS_CONTENT);
        assert_eq!(anns[0].span, Span::new(2, 3));
        assert_eq!(anns[0].severity, Severity::Minor);
        assert!(anns[0].explanation.contains("\"x\""));
    }

    #[test]
    fn substitution_reports_both_sides() {
        let anns = baseline_annotate("a x y z c", "a b c");
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].error_type, EXTRANEOUS_CONTENT);
        assert_eq!(anns[0].span, Span::new(2, 7));
        assert_eq!(anns[0].severity, Severity::Major);
        assert_eq!(anns[1].error_type, MISSING_CONTENT);
        // anchored before "c"
        assert_eq!(anns[1].span, Span::new(8, 8));
    }

    #[test]
    fn leading_gap_anchors_at_first_aligned_token() {
        let anns = baseline_annotate("c d", "a b c d");
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].span, Span::new(0, 0));
        let empty = baseline_annotate("", "a b c");
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[0].span, Span::new(0, 0));
        assert_eq!(empty[0].severity, Severity::Major);
    }

    #[test]
    fn trailing_whitespace_end_anchor_is_text_length() {
        let anns = baseline_annotate("a b ", "a b c");
        assert_eq!(anns[0].span, Span::new(4, 4));
    }

    #[test]
    fn alignment_is_a_longest_common_subsequence() {
        let h = tokenize_spans("a b c b d a b");
        let r = tokenize_spans("b d c a b a");
        let pairs = lcs_alignment(&h, &r);
        assert_eq!(pairs.len(), 4);
        for w in pairs.windows(2) {
            assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        for &(i, j) in &pairs {
            assert_eq!(h[i].text, r[j].text);
        }
    }
}
