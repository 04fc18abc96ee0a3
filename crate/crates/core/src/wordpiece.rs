//! Greedy longest-match-first sub-word tokenization against a plain
//! one-token-per-line vocabulary, with label alignment for SRL samples.

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use crate::sample_gen::{SrlSample, OUTSIDE};

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const CONTINUATION_PREFIX: &str = "##";
/// Label carried by continuation pieces.
pub const CONTINUATION_LABEL: &str = "X";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: duplicate vocabulary entry {token:?} (first seen on line {first})")]
    Duplicate {
        token: String,
        line: usize,
        first: usize,
    },
    #[error("line {line}: empty vocabulary entry")]
    EmptyEntry { line: usize },
    #[error("vocabulary lacks special token {0}")]
    MissingSpecial(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary; the position of each entry is its id.
    pub fn from_entries<I, S>(entries: I) -> Result<Vocabulary, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            entries: Vec::new(),
            index: HashMap::new(),
        };
        for (i, e) in entries.into_iter().enumerate() {
            let e = e.into();
            if e.is_empty() {
                return Err(VocabError::EmptyEntry { line: i + 1 });
            }
            if let Some(&first) = vocab.index.get(&e) {
                return Err(VocabError::Duplicate {
                    token: e,
                    line: i + 1,
                    first: first + 1,
                });
            }
            vocab.index.insert(e.clone(), i);
            vocab.entries.push(e);
        }
        for special in [UNK, CLS, SEP, PAD] {
            if !vocab.index.contains_key(special) {
                return Err(VocabError::MissingSpecial(special));
            }
        }
        Ok(vocab)
    }

    pub fn load<R: BufRead>(input: R) -> Result<Vocabulary, VocabError> {
        let mut lines = Vec::new();
        for line in input.lines() {
            let line = line?;
            lines.push(line.strip_suffix('\r').unwrap_or(&line).to_string());
        }
        Vocabulary::from_entries(lines)
    }

    /// One entry per line, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(e);
            s.push('\n');
        }
        s
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn unk_id(&self) -> usize {
        self.index[UNK]
    }

    pub fn pad_id(&self) -> usize {
        self.index[PAD]
    }
}

/// Splits one whitespace-free word into vocabulary pieces. When any suffix
/// of the word cannot be matched the whole word becomes `[UNK]`.
pub fn tokenize_word(word: &str, vocab: &Vocabulary) -> Vec<String> {
    // Byte offsets of char boundaries, including the end.
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + CONTINUATION_PREFIX.len());
    while start + 1 < bounds.len() {
        let mut matched = None;
        for end in (start + 1..bounds.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if vocab.contains(&candidate) {
                matched = Some(end);
                break;
            }
        }
        match matched {
            Some(end) => {
                pieces.push(candidate.clone());
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

/// A sample split into pieces, with `[CLS]`/`[SEP]` sentinels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedTokenization {
    pub pieces: Vec<String>,
    /// Word label on each word's first piece, `X` on continuations, `O` on sentinels.
    pub labels: Vec<String>,
    /// 1 on the first piece of each word, 0 on continuations and sentinels.
    pub head_mask: Vec<u8>,
    /// Source word of each piece; `None` for sentinels.
    pub word_index: Vec<Option<usize>>,
}

impl AlignedTokenization {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Position of the first piece of source word `word`.
    pub fn first_piece_of(&self, word: usize) -> Option<usize> {
        self.word_index
            .iter()
            .zip(&self.head_mask)
            .position(|(w, &h)| h == 1 && *w == Some(word))
    }
}

pub fn tokenize_with_labels(sample: &SrlSample, vocab: &Vocabulary) -> AlignedTokenization {
    tokenize_words(&sample.seq_words, Some(&sample.bio), vocab)
}

/// Tokenizes words without gold labels; every head piece is labelled `O`.
pub fn tokenize_unlabelled(words: &[String], vocab: &Vocabulary) -> AlignedTokenization {
    tokenize_words(words, None, vocab)
}

fn tokenize_words(
    words: &[String],
    labels: Option<&[String]>,
    vocab: &Vocabulary,
) -> AlignedTokenization {
    let mut out = AlignedTokenization {
        pieces: vec![CLS.to_string()],
        labels: vec![OUTSIDE.to_string()],
        head_mask: vec![0],
        word_index: vec![None],
    };
    for (k, word) in words.iter().enumerate() {
        let label = labels.map_or(OUTSIDE, |l| l[k].as_str());
        for (j, piece) in tokenize_word(word, vocab).into_iter().enumerate() {
            out.pieces.push(piece);
            if j == 0 {
                out.labels.push(label.to_string());
                out.head_mask.push(1);
            } else {
                out.labels.push(CONTINUATION_LABEL.to_string());
                out.head_mask.push(0);
            }
            out.word_index.push(Some(k));
        }
    }
    out.pieces.push(SEP.to_string());
    out.labels.push(OUTSIDE.to_string());
    out.head_mask.push(0);
    out.word_index.push(None);
    out
}
