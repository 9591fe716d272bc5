use std::path::Path;

use proptest::prelude::*;
use tutorgrade::corpus::label_distribution;
use tutorgrade::desk;
use tutorgrade::preprocess::{
    build_model_input, CleaningConfig, TokenCounter, WhitespaceTokenizer, CODE_PLACEHOLDER,
};
use tutorgrade::{
    grouped_kfold, verify_no_leakage, Corpus, Dialogue, Label, Track, Turn, TutorResponse,
};

fn text_strategy() -> impl Strategy<Value = String> {
    let pieces = prop::sample::select(vec![
        "Hello",
        "step 2",
        "Student:",
        "\nTutor:",
        "```",
        "print(x)",
        "\n    x = 1",
        "!!!!",
        "...",
        "\"",
        "“",
        "[meta: a]",
        "WRONG",
        " ",
        "\n",
        "?",
        "¿",
        "é",
    ]);
    prop::collection::vec(pieces, 0..14).prop_map(|v| v.concat())
}

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    let label = prop::sample::select(Label::ALL.to_vec());
    let response = ("[a-zA-Z ,.!\"\\\\\n]{1,20}", label.clone(), label);
    prop::collection::vec(
        ("[a-z ]{1,12}", prop::collection::vec(response, 1..4)),
        1..6,
    )
    .prop_map(|ds| {
        let dialogues = ds
            .into_iter()
            .enumerate()
            .map(|(i, (hist, resps))| Dialogue {
                dialogue_id: format!("d{i}"),
                history: vec![Turn {
                    speaker: tutorgrade::corpus::Speaker::Student,
                    text: format!("x{hist}"),
                }],
                responses: resps
                    .into_iter()
                    .enumerate()
                    .map(|(j, (text, l1, l2))| TutorResponse {
                        response_id: format!("d{i}-{j}"),
                        tutor_source: "GPT-4".into(),
                        raw_text: text,
                        cleaned_text: None,
                        labels: [
                            (Track::MistakeIdentification, l1),
                            (Track::MistakeLocation, l2),
                        ]
                        .into_iter()
                        .collect(),
                    })
                    .collect(),
            })
            .collect();
        Corpus::new(dialogues, Track::MistakeLocation).unwrap()
    })
}

proptest! {
    #[test]
    fn corpus_jsonl_roundtrip(c in corpus_strategy()) {
        let back = Corpus::parse_jsonl(&c.to_jsonl(), c.track, Path::new("mem")).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn label_distribution_sums_to_responses(c in corpus_strategy()) {
        prop_assert_eq!(label_distribution(&c).unwrap().total(), c.num_responses());
    }

    #[test]
    fn cleaning_is_idempotent(text in text_strategy()) {
        let cleaner = CleaningConfig::default().compile().unwrap();
        let (once, _) = cleaner.clean_text(&text);
        let (twice, rules) = cleaner.clean_text(&once);
        prop_assert_eq!(&twice, &once);
        prop_assert!(rules.is_empty(), "rules fired on cleaned text: {:?}", rules);
        prop_assert!(!once.contains("```"));
    }

    #[test]
    fn model_input_within_budget(
        turns in prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,10}", 0..8),
        response in "[a-z]{1,6}( [a-z]{1,6}){0,5}",
        budget in 8usize..60,
    ) {
        let history: Vec<Turn> = turns
            .iter()
            .map(|t| Turn { speaker: tutorgrade::corpus::Speaker::Tutor, text: t.clone() })
            .collect();
        let lex = vec!["hi".to_string()];
        let input = build_model_input(&history, &response, &WhitespaceTokenizer, budget, &lex).unwrap();
        prop_assert!(input.token_count <= budget);
        prop_assert_eq!(input.token_count, WhitespaceTokenizer.count(&input.text));
        prop_assert!(input.text.ends_with(&response));
    }
}

#[test]
fn shared_task_corpus_folds_are_clean() {
    for track in Track::ALL {
        let c = desk::shared_task_corpus(track, 3);
        let plan = grouped_kfold(&c, 10, 42).unwrap();
        let report = verify_no_leakage(&plan, &c).unwrap();
        assert!(report.is_clean());
        assert_eq!(
            report.fold_sizes.iter().map(|s| s.responses).sum::<usize>(),
            2476
        );
    }
}

#[test]
fn desk_cleaning_reports_each_rule() {
    let (corpus, config) = desk::cleaning_table_corpus(9);
    let cleaner = config.compile().unwrap();
    let (cleaned, report) = cleaner.clean_corpus(&corpus).unwrap();
    for (source, counts) in desk::CLEANING_TABLE {
        for (rule, expected) in tutorgrade::preprocess::CleaningRule::ALL.iter().zip(counts) {
            assert_eq!(report.count(source, *rule), expected, "{source} {rule:?}");
        }
    }
    assert_eq!(report.grand_total(), 40);
    let placeholders = cleaned
        .responses()
        .filter(|(_, r)| r.text().contains(CODE_PLACEHOLDER))
        .count();
    assert_eq!(placeholders, 2);
}

#[test]
fn desk_pipeline_beats_majority_baseline() {
    use tutorgrade::classify::{predict_with_confidence, prepare_examples, train_fold};
    use tutorgrade::{metrics, weights::WeightChoice, HashedNgramBackend, TrainConfig};

    let corpus = desk::desk_corpus(30, 42);
    let cleaner = CleaningConfig::default().compile().unwrap();
    let (cleaned, _) = cleaner.clean_corpus(&corpus).unwrap();
    let examples = prepare_examples(&cleaned, &cleaner, &WhitespaceTokenizer).unwrap();
    let counts = label_distribution(&cleaned).unwrap();
    let spec = WeightChoice::Manual(Track::MistakeIdentification.default_manual_weights())
        .resolve(&counts)
        .unwrap();
    let plan = grouped_kfold(&cleaned, 5, 42).unwrap();
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for fold in 0..5 {
        let mut backend = HashedNgramBackend::new(256, 42).unwrap();
        let config = TrainConfig {
            seed: 42,
            ..TrainConfig::builtin(spec.clone())
        };
        let out = train_fold(&examples, &plan, fold, &mut backend, &config).unwrap();
        let val: Vec<_> = examples
            .iter()
            .filter(|e| plan.fold_of(&e.dialogue_id) == Some(fold))
            .cloned()
            .collect();
        let p = predict_with_confidence(&out.checkpoint, &backend, &val).unwrap();
        gold.extend(val.iter().map(|e| e.label.unwrap()));
        pred.extend(p.labels());
    }
    let report = metrics::evaluate(&gold, &pred).unwrap();
    // Predicting the majority class everywhere scores 1/3 of its own F1.
    assert!(report.macro_f1 > 0.5, "macro-F1 {}", report.macro_f1);
}
