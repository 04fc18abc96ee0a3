//! Per-predicate training samples.
//!
//! Every predicate of a cleaned sentence yields one sample: the sentence
//! words, a single-token BIO label per word relative to that predicate, and
//! the predicate's position and sense.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{Corpus, Sentence, EMPTY};

pub const OUTSIDE: &str = "O";
pub const VERB_PREDICATE: &str = "B-V";
pub const NOMINAL_PREDICATE: &str = "B-NVE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlSample {
    pub seq_words: Vec<String>,
    pub bio: Vec<String>,
    pub pred_index: usize,
    pub pred_sense: String,
    pub sentence_ref: usize,
    pub predicate_column: usize,
}

impl SrlSample {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.bio.len() != self.seq_words.len() {
            return Err(SampleError::Invalid(format!(
                "{} labels for {} words",
                self.bio.len(),
                self.seq_words.len()
            )));
        }
        if self.pred_index >= self.seq_words.len() {
            return Err(SampleError::Invalid(format!(
                "predicate index {} out of range",
                self.pred_index
            )));
        }
        let marks: Vec<usize> = self
            .bio
            .iter()
            .enumerate()
            .filter(|(_, l)| is_predicate_label(l))
            .map(|(i, _)| i)
            .collect();
        if marks != [self.pred_index] {
            return Err(SampleError::Invalid(format!(
                "predicate labels at {:?}, predicate index {}",
                marks, self.pred_index
            )));
        }
        Ok(())
    }
}

pub fn is_predicate_label(label: &str) -> bool {
    label == VERB_PREDICATE || label == NOMINAL_PREDICATE
}

/// Canonical spelling of a label read from external data: `o` is accepted for
/// `O`, and `B-N-V` for `B-NVE`.
pub fn canonical_label(label: &str) -> String {
    if label.eq_ignore_ascii_case(OUTSIDE) {
        OUTSIDE.to_string()
    } else if label == "B-N-V" {
        NOMINAL_PREDICATE.to_string()
    } else {
        label.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateMode {
    VerbsOnly,
    AllPredicates,
}

impl std::str::FromStr for PredicateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verbs" | "verbs_only" => Ok(PredicateMode::VerbsOnly),
            "all" | "all_predicates" => Ok(PredicateMode::AllPredicates),
            other => Err(format!("unknown predicate mode {other:?} (expected verbs|all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleConfig {
    pub verb_tags: BTreeSet<String>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            verb_tags: BTreeSet::from(["V".to_string()]),
        }
    }
}

impl SampleConfig {
    pub fn is_verb(&self, pos: &str) -> bool {
        self.verb_tags.contains(pos)
    }
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("sentence {sentence}: role column {column} has no matching predicate token")]
    OrphanColumn { sentence: usize, column: usize },
    #[error("invalid sample: {0}")]
    Invalid(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Last `#`-separated segment of a raw predicate cell.
pub fn sense_of(pred_sense_raw: &str) -> &str {
    pred_sense_raw.rsplit('#').next().unwrap_or(pred_sense_raw)
}

pub fn generate_samples(
    corpus: &Corpus,
    mode: PredicateMode,
    config: &SampleConfig,
) -> Result<Vec<SrlSample>, SampleError> {
    let mut samples = Vec::new();
    for (idx, sentence) in corpus.sentences.iter().enumerate() {
        samples.extend(sentence_samples(idx, sentence, mode, config)?);
    }
    Ok(samples)
}

fn sentence_samples(
    sentence_ref: usize,
    sentence: &Sentence,
    mode: PredicateMode,
    config: &SampleConfig,
) -> Result<Vec<SrlSample>, SampleError> {
    let predicates = sentence.predicate_positions();
    let columns = sentence.role_columns();
    if columns > predicates.len() {
        return Err(SampleError::OrphanColumn {
            sentence: sentence_ref,
            column: predicates.len(),
        });
    }
    let seq_words: Vec<String> = sentence.tokens.iter().map(|t| t.form.clone()).collect();

    let mut out = Vec::new();
    for (column, &pred_index) in predicates.iter().enumerate().take(columns) {
        let pred = &sentence.tokens[pred_index];
        let is_verb = config.is_verb(&pred.pos);
        if mode == PredicateMode::VerbsOnly && !is_verb {
            continue;
        }
        let bio = sentence
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == pred_index {
                    if is_verb { VERB_PREDICATE } else { NOMINAL_PREDICATE }.to_string()
                } else if t.roles[column] != EMPTY {
                    format!("B-{}", t.roles[column])
                } else {
                    OUTSIDE.to_string()
                }
            })
            .collect();
        out.push(SrlSample {
            seq_words: seq_words.clone(),
            bio,
            pred_index,
            pred_sense: sense_of(&pred.pred_sense_raw).to_string(),
            sentence_ref,
            predicate_column: column,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub verbs_only: usize,
    pub all_predicates: usize,
}

pub fn count_samples(corpus: &Corpus, config: &SampleConfig) -> SampleCounts {
    let mut counts = SampleCounts::default();
    for sentence in &corpus.sentences {
        let columns = sentence.role_columns();
        for &p in sentence.predicate_positions().iter().take(columns) {
            counts.all_predicates += 1;
            if config.is_verb(&sentence.tokens[p].pos) {
                counts.verbs_only += 1;
            }
        }
    }
    counts
}

/// Writes one JSON object per line.
pub fn write_samples<W: Write>(samples: &[SrlSample], mut out: W) -> Result<(), SampleError> {
    for s in samples {
        serde_json::to_writer(&mut out, s).map_err(|e| SampleError::Json { line: 0, source: e })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited samples, skipping blank lines and lines starting with
/// `#`. Labels are canonicalised and every sample is validated.
pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<SrlSample>, SampleError> {
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut s: SrlSample = serde_json::from_str(trimmed)
            .map_err(|e| SampleError::Json { line: i + 1, source: e })?;
        s.bio = s.bio.iter().map(|l| canonical_label(l)).collect();
        s.validate()?;
        samples.push(s);
    }
    Ok(samples)
}
