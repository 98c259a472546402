mod common;

use canvas_core::metrics::tokenize::tokenize_spans;
use canvas_core::metrics::{annotation_score, baseline_annotate, tokenize, EXTRANEOUS_CONTENT, MISSING_CONTENT};
use canvas_core::model::Severity;
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", "c", "d", "the", "GNU", ",", ".", "我们", "é"]),
        0..14,
    )
    .prop_map(|w| w.join(" "))
}

/// Tokens quoted in an explanation; the annotator joins tokens with spaces.
fn quoted_token_count(explanation: &str) -> usize {
    let start = explanation.find('"').unwrap();
    let end = explanation.rfind('"').unwrap();
    explanation[start + 1..end].split_whitespace().count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn identical_texts_have_no_errors(x in text()) {
        prop_assert!(baseline_annotate(&x, &x).is_empty());
    }

    #[test]
    fn spans_stay_inside_prediction(p in text(), r in text()) {
        let len = p.chars().count();
        for a in baseline_annotate(&p, &r) {
            prop_assert!(a.span.start <= a.span.end && a.span.end <= len);
            if a.error_type == MISSING_CONTENT {
                prop_assert!(a.span.is_empty());
            }
        }
    }

    #[test]
    fn runs_account_for_every_unaligned_token(p in text(), r in text()) {
        let hyp = tokenize(&p);
        let refs = tokenize(&r);
        let lcs = common::lcs_len(&hyp, &refs);
        let spans = tokenize_spans(&p);
        let mut extraneous = 0;
        let mut missing = 0;
        for a in baseline_annotate(&p, &r) {
            let n = if a.error_type == EXTRANEOUS_CONTENT {
                let covered = spans.iter().filter(|t| t.start >= a.span.start && t.end <= a.span.end).count();
                extraneous += covered;
                covered
            } else {
                prop_assert_eq!(a.error_type.as_str(), MISSING_CONTENT);
                let n = quoted_token_count(&a.explanation);
                missing += n;
                n
            };
            prop_assert_eq!(a.severity == Severity::Major, n >= 3);
        }
        prop_assert_eq!(extraneous, hyp.len() - lcs);
        prop_assert_eq!(missing, refs.len() - lcs);
    }

    #[test]
    fn score_is_additive(majors in 0usize..20, minors in 0usize..20) {
        let sev = std::iter::repeat_n(Severity::Major, majors).chain(std::iter::repeat_n(Severity::Minor, minors));
        prop_assert_eq!(annotation_score(sev), -(5.0 * majors as f64 + minors as f64));
    }
}

#[test]
fn truncated_final_clause_is_one_missing_annotation_at_end() {
    let reference = "The GNU Project considers the software free, and it remains widely used by developers.";
    let prediction = "The GNU Project considers the software free,";
    let anns = baseline_annotate(prediction, reference);
    assert_eq!(anns.len(), 1, "{anns:?}");
    let len = prediction.chars().count();
    assert_eq!(anns[0].error_type, MISSING_CONTENT);
    assert_eq!((anns[0].span.start, anns[0].span.end), (len, len));
    assert_eq!(anns[0].severity, Severity::Major);
}

#[test]
fn small_examples() {
    let anns = baseline_annotate("a b c", "a b c d e");
    assert_eq!(anns.len(), 1);
    assert_eq!(anns[0].severity, Severity::Minor);
    assert!(anns[0].explanation.contains("d e"));
    assert_eq!((anns[0].span.start, anns[0].span.end), (5, 5));

    let anns = baseline_annotate("a x b", "a b");
    assert_eq!(anns.len(), 1);
    assert_eq!(anns[0].error_type, EXTRANEOUS_CONTENT);
    assert_eq!((anns[0].span.start, anns[0].span.end), (2, 3));
}
