mod common;

use common::*;
use srl_core::cleaner::*;
use srl_core::corpus_io::{parse_corpus, serialize_corpus, ColumnLayout};

fn run(name: &str) -> (srl_core::Corpus, CleaningReport) {
    let out = parse_corpus(&fixture_bytes(name), &ColumnLayout::CANONICAL);
    clean_corpus(&out.corpus, &out.diagnostics)
}

#[test]
fn each_defect_class_gets_its_action() {
    let (_, report) = run("defects.conll");
    let got: Vec<(usize, Rule, ActionKind)> = report
        .actions
        .iter()
        .map(|a| (a.sentence_index, a.rule, a.action))
        .collect();
    use ActionKind::*;
    use Rule::*;
    assert_eq!(
        got,
        vec![
            (1, R1, Deleted),
            (2, R2, Repaired),
            (3, R2, Deleted),
            (4, R3, Repaired),
            (5, R4, Repaired),
            (6, R5, Repaired),
            (7, R6, Deleted),
            (8, R7, Deleted),
            (9, R8, Deleted),
            (10, R9, Deleted),
        ]
    );
    assert_eq!(report.total_sentences, 11);
    assert_eq!(report.deleted_sentences, 6);
    assert_eq!(report.repaired_sentences, 4);
    assert_eq!(report.retained_sentences, 5);
    assert_eq!(report.retained_sentences, report.total_sentences - report.deleted_sentences);
}

#[test]
fn repairs_are_visible_in_output() {
    let (cleaned, _) = run("defects.conll");
    assert_eq!(cleaned.len(), 5);
    let text = serialize_corpus(&cleaned);
    assert!(text.contains("هلی_کوپتر"));
    assert!(!text.contains("هلی کوپتر"));
    // The trailing empty role column is gone.
    assert!(cleaned.sentences.iter().all(|s| s.tokens.iter().all(|t| t.roles.len() == s.predicate_positions().len())));
}

#[test]
fn orphan_column_sentence_is_dropped() {
    let (cleaned, report) = run("five.conll");
    assert_eq!(
        (report.total_sentences, report.deleted_sentences, report.retained_sentences),
        (5, 1, 4)
    );
    assert_eq!(cleaned.len(), 4);
}

#[test]
fn cleaning_is_idempotent() {
    for name in ["defects.conll", "five.conll", "corpus50.conll"] {
        let (once, _) = run(name);
        let (twice, report) = clean_corpus(&once, &[]);
        assert_eq!(once, twice, "{name}");
        assert!(report.actions.is_empty(), "{name}: {:?}", report.actions);
    }
}

#[test]
fn cleaning_is_deterministic() {
    let (a, ra) = run("defects.conll");
    let (b, rb) = run("defects.conll");
    assert_eq!(serialize_corpus(&a), serialize_corpus(&b));
    assert_eq!(ra.render(), rb.render());
}

#[test]
fn report_renders_counters_and_log() {
    let (_, report) = run("five.conll");
    let text = report.render();
    let first: Vec<&str> = text.lines().take(4).collect();
    assert_eq!(first.len(), 4);
    assert!(first[0].ends_with("\t5"));
    assert!(first[3].ends_with("\t4"));
    assert!(text.contains("2\tR2\tdeleted"));
}
