//! Two-step corpus cleaning: cell-level noise correction followed by removal
//! of sentences that cannot be used for training.
//!
//! Rules, in application order:
//!
//! | rule | kind   | effect |
//! |------|--------|--------|
//! | R3   | repair | zero-length cell becomes `_` |
//! | R4   | repair | a stray `.` cell becomes `_` (FORM/LEMMA of punctuation exempt) |
//! | R5   | repair | spaces inside FORM or LEMMA become `_` |
//! | R1   | delete | rows violating the schema (dropped rows, bad ids/heads, ragged role columns) |
//! | R2   | repair/delete | role-column count differs from predicate count; trailing all-`_` surplus columns are dropped, anything else deletes |
//! | R6   | delete | no predicate in the sentence |
//! | R7   | delete | every role cell is `_` |
//! | R8   | delete | sentence carries an unreadable-input diagnostic |
//! | R9   | delete | FILLPRED and PRED disagree |
//!
//! A deleted sentence is logged with its deleting rule only; repairs made to
//! it beforehand are discarded with it.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{Corpus, Diagnostic, DiagnosticCode, Sentence, EMPTY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Repaired,
    Deleted,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Repaired => "repaired",
            ActionKind::Deleted => "deleted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningAction {
    pub sentence_index: usize,
    pub rule: Rule,
    pub action: ActionKind,
    pub detail: String,
}

/// Four sentence counters plus the action log. `repaired_sentences` counts
/// retained sentences that needed at least one repair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_sentences: usize,
    pub repaired_sentences: usize,
    pub deleted_sentences: usize,
    pub retained_sentences: usize,
    pub actions: Vec<CleaningAction>,
}

impl CleaningReport {
    pub fn actions_for(&self, sentence_index: usize) -> impl Iterator<Item = &CleaningAction> {
        self.actions
            .iter()
            .filter(move |a| a.sentence_index == sentence_index)
    }

    /// Combines reports of consecutive corpus chunks; `other`'s sentence
    /// indices are shifted past this report's sentences.
    pub fn merge(mut self, other: CleaningReport) -> CleaningReport {
        let offset = self.total_sentences;
        self.total_sentences += other.total_sentences;
        self.repaired_sentences += other.repaired_sentences;
        self.deleted_sentences += other.deleted_sentences;
        self.retained_sentences += other.retained_sentences;
        self.actions
            .extend(other.actions.into_iter().map(|mut a| {
                a.sentence_index += offset;
                a
            }));
        self
    }

    /// Plain-text rendering: the four counters, then a tab-separated action log.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "Number of all sentences in the dataset\t{}\n",
            self.total_sentences
        ));
        s.push_str(&format!(
            "Number of repaired sentences\t{}\n",
            self.repaired_sentences
        ));
        s.push_str(&format!(
            "Number of deleted sentences\t{}\n",
            self.deleted_sentences
        ));
        s.push_str(&format!(
            "Number of sentences used as input data\t{}\n",
            self.retained_sentences
        ));
        s.push_str("\nsentence\trule\taction\tdetail\n");
        for a in &self.actions {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                a.sentence_index, a.rule, a.action, a.detail
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanerConfig {
    /// POS tags marking punctuation tokens, whose FORM/LEMMA may legitimately be ".".
    pub punctuation_tags: BTreeSet<String>,
}

impl Default for CleanerConfig {
    fn default() -> Self {
        CleanerConfig {
            punctuation_tags: ["PUNC", "PUNCT"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

enum Outcome {
    Keep(Sentence, Vec<CleaningAction>),
    Delete(CleaningAction),
}

pub fn clean_corpus(corpus: &Corpus, diagnostics: &[Diagnostic]) -> (Corpus, CleaningReport) {
    clean_corpus_with(corpus, diagnostics, &CleanerConfig::default())
}

pub fn clean_corpus_with(
    corpus: &Corpus,
    diagnostics: &[Diagnostic],
    config: &CleanerConfig,
) -> (Corpus, CleaningReport) {
    let mut cleaned = Corpus::default();
    let mut report = CleaningReport {
        total_sentences: corpus.len(),
        ..CleaningReport::default()
    };
    for (idx, sentence) in corpus.sentences.iter().enumerate() {
        let diags: Vec<&Diagnostic> = diagnostics
            .iter()
            .filter(|d| d.sentence_index == idx)
            .collect();
        match clean_sentence(idx, sentence, &diags, config) {
            Outcome::Keep(s, actions) => {
                if !actions.is_empty() {
                    report.repaired_sentences += 1;
                }
                report.actions.extend(actions);
                cleaned.sentences.push(s);
            }
            Outcome::Delete(action) => {
                report.deleted_sentences += 1;
                report.actions.push(action);
            }
        }
    }
    report.retained_sentences = report.total_sentences - report.deleted_sentences;
    (cleaned, report)
}

fn clean_sentence(
    idx: usize,
    sentence: &Sentence,
    diags: &[&Diagnostic],
    config: &CleanerConfig,
) -> Outcome {
    let mut s = sentence.clone();
    let mut actions = Vec::new();
    let repair = |rule: Rule, detail: String| CleaningAction {
        sentence_index: idx,
        rule,
        action: ActionKind::Repaired,
        detail,
    };
    let delete = |rule: Rule, detail: String| {
        Outcome::Delete(CleaningAction {
            sentence_index: idx,
            rule,
            action: ActionKind::Deleted,
            detail,
        })
    };

    // R3: empty cells.
    let mut filled = 0;
    for t in &mut s.tokens {
        for c in text_cells_mut(t) {
            if c.is_empty() {
                *c = EMPTY.to_string();
                filled += 1;
            }
        }
    }
    if filled > 0 {
        actions.push(repair(Rule::R3, format!("{filled} empty cell(s) set to '_'")));
    }

    // R4: stray periods.
    let mut periods = 0;
    for t in &mut s.tokens {
        let punct = config.punctuation_tags.contains(&t.pos);
        let mut fix = |c: &mut String| {
            if c == "." {
                *c = EMPTY.to_string();
                periods += 1;
            }
        };
        if !punct {
            fix(&mut t.form);
            fix(&mut t.lemma);
        }
        fix(&mut t.pos);
        fix(&mut t.feat);
        fix(&mut t.deprel);
        fix(&mut t.pred_sense_raw);
        t.roles.iter_mut().for_each(&mut fix);
    }
    if periods > 0 {
        actions.push(repair(Rule::R4, format!("{periods} stray '.' cell(s) set to '_'")));
    }

    // R5: internal spaces in FORM/LEMMA.
    let mut spaced = 0;
    for t in &mut s.tokens {
        for c in [&mut t.form, &mut t.lemma] {
            if c.contains(' ') {
                *c = c.replace(' ', "_");
                spaced += 1;
            }
        }
    }
    if spaced > 0 {
        actions.push(repair(
            Rule::R5,
            format!("{spaced} FORM/LEMMA cell(s) had spaces replaced by '_'"),
        ));
    }

    // R1: structure.
    if let Some(d) = diags.iter().find(|d| d.code.drops_row()) {
        return delete(
            Rule::R1,
            format!("line {}: {} ({})", d.line, d.code, d.message),
        );
    }
    if let Some(reason) = structure_violation(&s) {
        return delete(Rule::R1, reason);
    }

    // R2: role-column count vs predicate count.
    let predicates = s.tokens.iter().filter(|t| t.fill_pred).count();
    let columns = s.role_columns();
    if columns != predicates {
        let surplus_is_blank = columns > predicates
            && s.tokens
                .iter()
                .all(|t| t.roles[predicates..].iter().all(|r| r == EMPTY));
        if surplus_is_blank {
            for t in &mut s.tokens {
                t.roles.truncate(predicates);
            }
            actions.push(repair(
                Rule::R2,
                format!(
                    "dropped {} trailing empty role column(s)",
                    columns - predicates
                ),
            ));
        } else {
            return delete(
                Rule::R2,
                format!("{columns} role column(s) for {predicates} predicate(s)"),
            );
        }
    }

    // R6
    if predicates == 0 {
        return delete(Rule::R6, "no predicate in sentence".to_string());
    }

    // R7
    if s.tokens.iter().all(|t| t.roles.iter().all(|r| r == EMPTY)) {
        return delete(Rule::R7, "no semantic role annotation".to_string());
    }

    // R8
    if let Some(d) = diags
        .iter()
        .find(|d| d.code == DiagnosticCode::Unreadable)
    {
        return delete(Rule::R8, format!("line {}: {}", d.line, d.message));
    }

    // R9
    if let Some(t) = s
        .tokens
        .iter()
        .find(|t| t.fill_pred == t.is_predicate_sense_empty())
    {
        let detail = if t.fill_pred {
            format!("token {} is a predicate without a sense", t.id)
        } else {
            format!(
                "token {} has sense {:?} but is not a predicate",
                t.id, t.pred_sense_raw
            )
        };
        return delete(Rule::R9, detail);
    }

    Outcome::Keep(s, actions)
}

fn text_cells_mut(t: &mut crate::corpus_io::TokenRecord) -> impl Iterator<Item = &mut String> {
    [
        &mut t.form,
        &mut t.lemma,
        &mut t.pos,
        &mut t.feat,
        &mut t.deprel,
        &mut t.pred_sense_raw,
    ]
    .into_iter()
    .chain(t.roles.iter_mut())
}

fn structure_violation(s: &Sentence) -> Option<String> {
    if s.tokens.is_empty() {
        return Some("sentence has no rows".to_string());
    }
    let n = s.tokens.len();
    let width = s.tokens[0].roles.len();
    for (i, t) in s.tokens.iter().enumerate() {
        if t.id != i + 1 {
            return Some(format!("row {} has id {}, expected {}", i + 1, t.id, i + 1));
        }
        if t.head == t.id {
            return Some(format!("token {} is its own head", t.id));
        }
        if t.head > n {
            return Some(format!("token {} has head {} beyond sentence length", t.id, t.head));
        }
        if t.roles.len() != width {
            return Some(format!(
                "token {} has {} role column(s), token 1 has {}",
                t.id,
                t.roles.len(),
                width
            ));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{parse_corpus, ColumnLayout};

    fn run(text: &str) -> (Corpus, CleaningReport) {
        let out = parse_corpus(text.as_bytes(), &ColumnLayout::CANONICAL);
        clean_corpus(&out.corpus, &out.diagnostics)
    }

    #[test]
    fn sentence_without_predicate_is_deleted() {
        let (c, r) = run("1\ta\ta\tN\t_\t0\tROOT\t_\t_\n\n");
        assert!(c.is_empty());
        assert_eq!(r.actions.len(), 1);
        assert_eq!(r.actions[0].rule, Rule::R6);
    }

    #[test]
    fn clean_sentence_passes_untouched() {
        let text = "1\ta\ta\tV\t_\t0\tROOT\tY\ta\t_\n2\tb\tb\tN\t_\t1\tOBJ\t_\t_\tA1\n\n";
        let (c, r) = run(text);
        assert_eq!(c.len(), 1);
        assert!(r.actions.is_empty());
        assert_eq!(r.repaired_sentences, 0);
    }

    #[test]
    fn trailing_blank_column_is_dropped() {
        let text = "1\ta\ta\tV\t_\t0\tROOT\tY\ta\t_\t_\n2\tb\tb\tN\t_\t1\tOBJ\t_\t_\tA1\t_\n\n";
        let (c, r) = run(text);
        assert_eq!(c.sentences[0].role_columns(), 1);
        assert_eq!(r.actions[0].rule, Rule::R2);
        assert_eq!(r.actions[0].action, ActionKind::Repaired);
        assert_eq!(r.repaired_sentences, 1);
    }

    #[test]
    fn punctuation_form_period_is_kept() {
        let text = "1\ta\ta\tV\t_\t0\tROOT\tY\ta\t_\n2\t.\t.\tPUNC\t.\t1\tPUNC\t_\t_\tA1\n\n";
        let (c, r) = run(text);
        let t = &c.sentences[0].tokens[1];
        assert_eq!(t.form, ".");
        assert_eq!(t.feat, "_");
        assert_eq!(r.actions.len(), 1);
        assert_eq!(r.actions[0].rule, Rule::R4);
    }

    #[test]
    fn merge_offsets_indices() {
        let (_, a) = run("1\ta\ta\tN\t_\t0\tROOT\t_\t_\n\n");
        let (_, b) = run("1\ta\ta\tN\t_\t0\tROOT\t_\t_\n\n");
        let m = a.merge(b);
        assert_eq!(m.total_sentences, 2);
        assert_eq!(m.actions[1].sentence_index, 1);
    }

    #[test]
    fn render_has_four_counters() {
        let (_, r) = run("1\ta\ta\tN\t_\t0\tROOT\t_\t_\n\n");
        let text = r.render();
        assert!(text.starts_with("Number of all sentences in the dataset\t1\n"));
        assert!(text.contains("Number of sentences used as input data\t0\n"));
        assert!(text.contains("0\tR6\tdeleted\t"));
    }
}
