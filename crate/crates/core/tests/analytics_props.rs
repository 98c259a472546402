use std::collections::BTreeMap;

use canvas_core::analytics::{error_type_counts, histogram, shared_ranges, summarize};
use canvas_core::model::{ErrorAnnotation, InstanceScore, LanguagePair, Run, RunStatus, Severity, Span};
use proptest::prelude::*;

fn values() -> impl Strategy<Value = Vec<f64>> {
    // small integer grid so that many values sit exactly on bin edges
    let v = prop_oneof![
        (-20i32..=20).prop_map(|x| x as f64 / 2.0),
        -50.0f64..50.0,
        Just(0.0),
    ];
    prop::collection::vec(v, 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn counts_sum_to_input_size(v in values(), bins in 1usize..40, explicit in any::<bool>()) {
        let range = explicit.then_some((-5.0, 5.0));
        let h = histogram(&v, bins, range).unwrap();
        prop_assert_eq!(h.total, v.len());
        prop_assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), v.len());
        prop_assert_eq!(h.bins.len(), bins);
        prop_assert_eq!(h.bins[0].lower, h.lo);
        prop_assert_eq!(h.bins[bins - 1].upper, h.hi);
        for w in h.bins.windows(2) {
            prop_assert_eq!(w[0].upper, w[1].lower);
        }
    }

    #[test]
    fn in_range_values_land_in_their_bin(v in values(), bins in 1usize..40) {
        let h = histogram(&v, bins, None).unwrap();
        // recount with the reported edges
        let mut recount = vec![0usize; bins];
        for &x in &v {
            let i = h
                .bins
                .iter()
                .position(|b| b.lower <= x && x < b.upper)
                .unwrap_or(bins - 1);
            recount[i] += 1;
        }
        prop_assert_eq!(recount, h.bins.iter().map(|b| b.count).collect::<Vec<_>>());
    }

    #[test]
    fn error_types_sorted_and_complete(types in prop::collection::vec(prop::sample::select(vec!["a", "b", "missing content", "x y"]), 0..50)) {
        let anns: Vec<ErrorAnnotation> = types.iter().map(|t| annotation(t)).collect();
        let counts = error_type_counts(&anns);
        prop_assert_eq!(counts.iter().map(|c| c.count).sum::<usize>(), anns.len());
        for w in counts.windows(2) {
            prop_assert!(w[0].count > w[1].count || (w[0].count == w[1].count && w[0].error_type < w[1].error_type));
        }
    }

    #[test]
    fn means_are_arithmetic(v in prop::collection::vec(-100.0f64..100.0, 1..50)) {
        let scores: Vec<InstanceScore> = v
            .iter()
            .enumerate()
            .map(|(i, x)| InstanceScore::new(&format!("i{i}"), "comet", *x).unwrap())
            .collect();
        let stats = summarize(&run(), &scores, &[], &BTreeMap::new(), 20).unwrap();
        let want = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((stats.mean_scores["comet"] - want).abs() <= 1e-12);
    }
}

fn annotation(t: &str) -> ErrorAnnotation {
    ErrorAnnotation {
        id: String::new(),
        instance_id: String::new(),
        error_type: t.into(),
        severity: Severity::Minor,
        span: Span::new(0, 0),
        explanation: String::new(),
        origin: "test".into(),
    }
}

fn run() -> Run {
    Run {
        id: "r".into(),
        name: "r".into(),
        lang: LanguagePair::new("zh", "en").unwrap(),
        created_at: chrono::Utc::now(),
        requested_metrics: Default::default(),
        device_hints: Vec::new(),
        status: RunStatus::Ready,
        bleu: None,
        instance_count: 0,
    }
}

#[test]
fn disjoint_ranges_share_the_union() {
    let a: Vec<InstanceScore> = [0.0, 0.5, 1.0].iter().map(|v| InstanceScore::new("a", "comet", *v).unwrap()).collect();
    let b: Vec<InstanceScore> = [2.0, 3.0].iter().map(|v| InstanceScore::new("b", "comet", *v).unwrap()).collect();
    let ranges = shared_ranges([a.as_slice(), b.as_slice()]);
    assert_eq!(ranges["comet"], (0.0, 3.0));
    let sa = summarize(&run(), &a, &[], &ranges, 20).unwrap();
    let sb = summarize(&run(), &b, &[], &ranges, 20).unwrap();
    for s in [sa, sb] {
        assert_eq!((s.histograms["comet"].lo, s.histograms["comet"].hi), (0.0, 3.0));
    }
}

#[test]
fn one_value_per_bin_oracle() {
    let v: Vec<f64> = (0..20).map(f64::from).collect();
    let h = histogram(&v, 20, Some((0.0, 19.0))).unwrap();
    assert!(h.bins.iter().all(|b| b.count == 1));
}
