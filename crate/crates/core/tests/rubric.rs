use std::collections::BTreeMap;

use chrono::NaiveDate;
use devinv_core::{
    parse_answer, score_field, token_f1, ExtractionResult, ExtractionTask, IncidentMetadata, OverrideTable,
    QualityImpact, RubricConfig, Score,
};
use proptest::prelude::*;

const VOCAB: [&str; 10] = [
    "worn", "seal", "pump", "valve", "the", "operator", "error", "filter", "gasket", "a",
];

fn words(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&VOCAB[..]), 0..max).prop_map(|w| w.join(" "))
}

fn truth() -> impl Strategy<Value = IncidentMetadata> {
    (
        (2000i32..2030, 1u32..=12, 1u32..=28),
        prop::sample::select(vec!["Riverside plant", "Lakeside plant", "Apex Contract Manufacturing"]),
        prop::collection::vec("[A-C][0-9]{4}", 0..3),
        prop::sample::select(vec![
            QualityImpact::Impacted,
            QualityImpact::NotImpacted,
            QualityImpact::Indeterminate,
        ]),
        words(8),
    )
        .prop_map(
            |((y, m, d), site, batches, quality_impact, root_cause)| IncidentMetadata {
                occurrence_date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
                site: site.into(),
                batches,
                quality_impact,
                root_cause,
                product_line: "line".into(),
                extra: BTreeMap::new(),
            },
        )
}

fn answer(task: ExtractionTask) -> BoxedStrategy<String> {
    match task {
        ExtractionTask::OccurrenceDate => (2000i32..2030, 1u32..=12, 1u32..=28)
            .prop_map(|(y, m, d)| format!("{y:04}-{m:02}-{d:02}"))
            .boxed(),
        ExtractionTask::Site => {
            prop::sample::select(vec!["Riverside plant", "Riverside", "Lakeside plant", "Company-A"])
                .prop_map(String::from)
                .boxed()
        }
        ExtractionTask::Batches => prop::collection::vec("[A-C][0-9]{4}", 0..3)
            .prop_map(|b| b.join(", "))
            .boxed(),
        ExtractionTask::QualityImpact => {
            prop::sample::select(vec!["impacted", "not impacted", "unknown", "no impact to the batch"])
                .prop_map(String::from)
                .boxed()
        }
        ExtractionTask::RootCause => words(8).boxed(),
    }
}

fn result(task: ExtractionTask, raw: &str) -> ExtractionResult {
    ExtractionResult {
        record_id: "inc-x".into(),
        task,
        raw_answer: raw.into(),
        parsed: parse_answer(task, raw),
        provider_id: "p".into(),
    }
}

fn task() -> impl Strategy<Value = ExtractionTask> {
    prop::sample::select(ExtractionTask::ALL.to_vec())
}

fn case() -> impl Strategy<Value = (ExtractionTask, String, IncidentMetadata)> {
    task().prop_flat_map(|t| (Just(t), answer(t), truth()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn scoring_is_deterministic((t, raw, truth) in case()) {
        let none = OverrideTable::new();
        let rubric = RubricConfig::default();
        let a = score_field(t, &result(t, &raw), &truth, &none, &rubric);
        let b = score_field(t, &result(t, &raw), &truth, &none, &rubric);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn overrides_dominate((t, raw, truth) in case(), forced in prop::sample::select(vec![Score::Accurate, Score::Acceptable, Score::Inaccurate])) {
        let mut table = OverrideTable::new();
        table.insert("inc-x", t, forced, "reviewer");
        let s = score_field(t, &result(t, &raw), &truth, &table, &RubricConfig::default());
        prop_assert_eq!(s.score, forced);
        prop_assert!(s.overridden);
    }

    #[test]
    fn root_cause_is_monotone_in_f1(a in words(10), b in words(10), truth in truth()) {
        let rubric = RubricConfig::default();
        let none = OverrideTable::new();
        let t = ExtractionTask::RootCause;
        let (fa, fb) = (token_f1(&a, &truth.root_cause), token_f1(&b, &truth.root_cause));
        let sa = score_field(t, &result(t, &a), &truth, &none, &rubric).score;
        let sb = score_field(t, &result(t, &b), &truth, &none, &rubric).score;
        if fa > fb {
            prop_assert!(sa >= sb);
        }
        if fa == fb {
            prop_assert_eq!(sa, sb);
        }
    }

    #[test]
    fn f1_is_symmetric_and_bounded(a in words(12), b in words(12)) {
        let f = token_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, token_f1(&b, &a));
    }
}

#[test]
fn f1_counts_shared_tokens_once() {
    let shared: Vec<String> = (0..11).map(|i| format!("s{i}")).collect();
    let mut p = shared.clone();
    p.extend((0..9).map(|i| format!("p{i}")));
    let mut t = shared;
    t.extend((0..9).map(|i| format!("t{i}")));
    let f = token_f1(&p.join(" "), &t.join(" "));
    assert!((f - 0.55).abs() < 1e-12);

    let truth = IncidentMetadata {
        occurrence_date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        site: "s".into(),
        batches: vec![],
        quality_impact: QualityImpact::Indeterminate,
        root_cause: t.join(" "),
        product_line: "l".into(),
        extra: BTreeMap::new(),
    };
    let s = score_field(
        ExtractionTask::RootCause,
        &result(ExtractionTask::RootCause, &p.join(" ")),
        &truth,
        &OverrideTable::new(),
        &RubricConfig::default(),
    );
    assert_eq!(s.score, Score::Acceptable);

    assert_eq!(token_f1("a a b", "a b b"), 2.0 * 2.0 / 6.0);
    assert_eq!(token_f1("", ""), 1.0);
    assert_eq!(token_f1("x", ""), 0.0);
}
