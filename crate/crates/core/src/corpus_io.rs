//! Reader and writer for the tab-separated, blank-line-delimited dependency
//! SRL corpus format.
//!
//! The canonical layout has nine fixed columns
//! `ID FORM LEMMA POS FEAT HEAD DEPREL FILLPRED PRED` followed by one role
//! column per predicate of the sentence. Other layouts can be read through a
//! [`ColumnLayout`]; output is always written in the canonical layout.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Canonical empty-cell marker.
pub const EMPTY: &str = "_";

/// One row of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub pos: String,
    pub feat: String,
    pub head: usize,
    pub deprel: String,
    pub fill_pred: bool,
    pub pred_sense_raw: String,
    pub roles: Vec<String>,
}

impl TokenRecord {
    pub fn is_predicate_sense_empty(&self) -> bool {
        self.pred_sense_raw == EMPTY
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<TokenRecord>,
    /// 1-based line number of the first row in the source text.
    pub source_line: usize,
}

/// Sentences compare by content only; `source_line` is diagnostic metadata.
impl PartialEq for Sentence {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Eq for Sentence {}

impl Sentence {
    pub fn new(tokens: Vec<TokenRecord>) -> Self {
        Sentence {
            tokens,
            source_line: 0,
        }
    }

    /// Number of role columns, taken from the first token.
    pub fn role_columns(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.roles.len())
    }

    /// Positions (0-based) of tokens flagged as predicates, in order. The
    /// n-th entry owns the n-th role column.
    pub fn predicate_positions(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.fill_pred)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    /// The line is not valid UTF-8; the sentence is distorted.
    Unreadable,
    /// Fewer cells than the layout's fixed columns.
    MissingColumns,
    /// ID or HEAD is not a non-negative integer.
    BadInteger,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::Unreadable => "unreadable",
            DiagnosticCode::MissingColumns => "missing_columns",
            DiagnosticCode::BadInteger => "bad_integer",
        }
    }

    /// Whether a row carrying this code was dropped from its sentence.
    pub fn drops_row(self) -> bool {
        !matches!(self, DiagnosticCode::Unreadable)
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub sentence_index: usize,
    pub code: DiagnosticCode,
    pub message: String,
}

/// Positions (0-based) of the fixed columns in a source file. Every column at
/// or after `roles_from` is a role column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub id: usize,
    pub form: usize,
    pub lemma: usize,
    pub pos: usize,
    pub feat: usize,
    pub head: usize,
    pub deprel: usize,
    pub fill_pred: usize,
    pub pred: usize,
    pub roles_from: usize,
}

impl ColumnLayout {
    /// `ID FORM LEMMA POS FEAT HEAD DEPREL FILLPRED PRED APRED...`
    pub const CANONICAL: ColumnLayout = ColumnLayout {
        id: 0,
        form: 1,
        lemma: 2,
        pos: 3,
        feat: 4,
        head: 5,
        deprel: 6,
        fill_pred: 7,
        pred: 8,
        roles_from: 9,
    };

    /// `ID FORM LEMMA POS PPOS FEAT HEAD DEPREL FILLPRED PRED APRED...`, the
    /// ten-fixed-column variant with a duplicated POS column.
    pub const DOUBLE_POS: ColumnLayout = ColumnLayout {
        id: 0,
        form: 1,
        lemma: 2,
        pos: 3,
        feat: 5,
        head: 6,
        deprel: 7,
        fill_pred: 8,
        pred: 9,
        roles_from: 10,
    };

    pub fn fixed_columns(&self) -> usize {
        self.roles_from
    }

    fn max_fixed_index(&self) -> usize {
        [
            self.id,
            self.form,
            self.lemma,
            self.pos,
            self.feat,
            self.head,
            self.deprel,
            self.fill_pred,
            self.pred,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

impl Default for ColumnLayout {
    fn default() -> Self {
        ColumnLayout::CANONICAL
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub corpus: Corpus,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses corpus bytes. Never fails: malformed rows are dropped with a
/// diagnostic, and invalid UTF-8 is decoded lossily and flagged so the
/// cleaner can discard the sentence.
pub fn parse_corpus(input: &[u8], layout: &ColumnLayout) -> ParseOutput {
    let mut out = ParseOutput::default();
    let mut current: Option<Sentence> = None;

    for (line_idx, raw) in input.split(|&b| b == b'\n').enumerate() {
        let line_no = line_idx + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);

        if raw.is_empty() {
            if let Some(s) = current.take() {
                out.corpus.sentences.push(s);
            }
            continue;
        }
        if current.is_none() && raw.first() == Some(&b'#') {
            continue;
        }

        let sentence_index = out.corpus.sentences.len();
        let sentence = current.get_or_insert_with(|| Sentence {
            tokens: Vec::new(),
            source_line: line_no,
        });

        let text = match std::str::from_utf8(raw) {
            Ok(s) => std::borrow::Cow::Borrowed(s),
            Err(e) => {
                out.diagnostics.push(Diagnostic {
                    line: line_no,
                    sentence_index,
                    code: DiagnosticCode::Unreadable,
                    message: format!("invalid UTF-8 at byte {}", e.valid_up_to()),
                });
                String::from_utf8_lossy(raw)
            }
        };

        match parse_row(&text, layout) {
            Ok(token) => sentence.tokens.push(token),
            Err((code, message)) => out.diagnostics.push(Diagnostic {
                line: line_no,
                sentence_index,
                code,
                message,
            }),
        }
    }
    if let Some(s) = current.take() {
        out.corpus.sentences.push(s);
    }
    out
}

fn parse_row(line: &str, layout: &ColumnLayout) -> Result<TokenRecord, (DiagnosticCode, String)> {
    let cells: Vec<&str> = line.split('\t').collect();
    let needed = layout.max_fixed_index().max(layout.roles_from.saturating_sub(1)) + 1;
    if cells.len() < needed {
        return Err((
            DiagnosticCode::MissingColumns,
            format!("expected at least {needed} columns, found {}", cells.len()),
        ));
    }
    let int = |idx: usize, name: &str| -> Result<usize, (DiagnosticCode, String)> {
        cells[idx].trim().parse::<usize>().map_err(|_| {
            (
                DiagnosticCode::BadInteger,
                format!("{name} column holds {:?}, not an integer", cells[idx]),
            )
        })
    };
    let id = int(layout.id, "ID")?;
    let head = int(layout.head, "HEAD")?;

    Ok(TokenRecord {
        id,
        form: cells[layout.form].to_string(),
        lemma: cells[layout.lemma].to_string(),
        pos: cells[layout.pos].to_string(),
        feat: cells[layout.feat].to_string(),
        head,
        deprel: cells[layout.deprel].to_string(),
        fill_pred: cells[layout.fill_pred] == "Y",
        pred_sense_raw: cells[layout.pred].to_string(),
        roles: cells[layout.roles_from..]
            .iter()
            .map(|c| c.to_string())
            .collect(),
    })
}

fn cell(s: &str) -> &str {
    if s.is_empty() {
        EMPTY
    } else {
        s
    }
}

/// Writes the corpus in the canonical layout, one blank line after every
/// sentence.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> io::Result<()> {
    for sentence in &corpus.sentences {
        for t in &sentence.tokens {
            write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id,
                cell(&t.form),
                cell(&t.lemma),
                cell(&t.pos),
                cell(&t.feat),
                t.head,
                cell(&t.deprel),
                if t.fill_pred { "Y" } else { EMPTY },
                cell(&t.pred_sense_raw),
            )?;
            for r in &t.roles {
                write!(out, "\t{}", cell(r))?;
            }
            out.write_all(b"\n")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_corpus(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("corpus text is UTF-8")
}
