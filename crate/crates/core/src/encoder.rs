//! Numeric model inputs: token ids, label ids, predicate indicator and
//! attention mask, right-padded to a dataset-wide length.
//!
//! # Encoded dataset file
//!
//! All integers little-endian.
//!
//! ```text
//! magic        8 bytes   "SRLENC\0\0"
//! version      u32       ENCODED_FORMAT_VERSION
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (EncodedHeader)
//! count        u32       number of records
//! record*      count times:
//!   len            u32
//!   token_ids      len x u32
//!   label_ids      len x u32
//!   pred_indicator len x u8
//!   attention_mask len x u8
//!   true_length    u32
//! ```

use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample_gen::{SrlSample, OUTSIDE};
use crate::wordpiece::{AlignedTokenization, Vocabulary, CONTINUATION_LABEL, PAD, UNK};

pub const UNK_LABEL: &str = UNK;
pub const PAD_LABEL: &str = PAD;
pub const UNK_LABEL_ID: u32 = 0;
pub const PAD_LABEL_ID: u32 = 1;

pub const ENCODED_MAGIC: &[u8; 8] = b"SRLENC\0\0";
pub const ENCODED_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("sequence needs {required} positions but the maximum length is {max_len}")]
    TooLong { required: usize, max_len: usize },
    #[error("label {0:?} is not in the label map")]
    UnknownLabel(String),
    #[error("piece {0:?} is not in the vocabulary")]
    UnknownPiece(String),
    #[error("predicate word {0} has no head piece")]
    MissingPredicate(usize),
    #[error("label map line {line}: {reason}")]
    LabelMapFormat { line: usize, reason: String },
    #[error("encoded file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bijection between label texts and contiguous ids; `[UNK]` is 0, `[PAD]` is 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    forward: HashMap<String, u32>,
    backward: Vec<String>,
}

impl LabelMap {
    fn with_reserved() -> LabelMap {
        let mut m = LabelMap {
            forward: HashMap::new(),
            backward: Vec::new(),
        };
        m.push(UNK_LABEL);
        m.push(PAD_LABEL);
        m
    }

    fn push(&mut self, label: &str) {
        if !self.forward.contains_key(label) {
            self.forward
                .insert(label.to_string(), self.backward.len() as u32);
            self.backward.push(label.to_string());
        }
    }

    /// Reserved entries, then `X`, then every label in order of first
    /// occurrence over the samples, then `O` if it never occurred.
    pub fn build<'a, I>(samples: I) -> LabelMap
    where
        I: IntoIterator<Item = &'a SrlSample>,
    {
        let mut m = LabelMap::with_reserved();
        m.push(CONTINUATION_LABEL);
        for s in samples {
            for l in &s.bio {
                m.push(l);
            }
        }
        m.push(OUTSIDE);
        m
    }

    pub fn from_labels<I, S>(labels: I) -> Result<LabelMap, EncodeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut m = LabelMap {
            forward: HashMap::new(),
            backward: Vec::new(),
        };
        for (i, l) in labels.into_iter().enumerate() {
            let l = l.as_ref();
            if m.forward.contains_key(l) {
                return Err(EncodeError::LabelMapFormat {
                    line: i + 1,
                    reason: format!("duplicate label {l:?}"),
                });
            }
            m.push(l);
        }
        if m.backward.first().map(String::as_str) != Some(UNK_LABEL)
            || m.backward.get(1).map(String::as_str) != Some(PAD_LABEL)
        {
            return Err(EncodeError::LabelMapFormat {
                line: 1,
                reason: "ids 0 and 1 must be [UNK] and [PAD]".to_string(),
            });
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backward.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.forward.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.backward.get(id as usize).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.backward
    }

    pub fn continuation_id(&self) -> Option<u32> {
        self.id(CONTINUATION_LABEL)
    }

    /// `label<TAB>id` per line.
    pub fn to_text(&self) -> String {
        self.backward
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{l}\t{i}\n"))
            .collect()
    }

    /// Reads `label<TAB>id` lines; `#` lines and blank lines are ignored. Ids
    /// must be contiguous from 0 in file order.
    pub fn read<R: BufRead>(input: R) -> Result<LabelMap, EncodeError> {
        let mut labels = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, id) = line.rsplit_once('\t').ok_or_else(|| EncodeError::LabelMapFormat {
                line: i + 1,
                reason: "expected label<TAB>id".to_string(),
            })?;
            let id: usize = id.trim().parse().map_err(|_| EncodeError::LabelMapFormat {
                line: i + 1,
                reason: format!("id {id:?} is not an integer"),
            })?;
            if id != labels.len() {
                return Err(EncodeError::LabelMapFormat {
                    line: i + 1,
                    reason: format!("expected id {}, found {id}", labels.len()),
                });
            }
            labels.push(label.to_string());
        }
        LabelMap::from_labels(labels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub token_ids: Vec<u32>,
    pub label_ids: Vec<u32>,
    pub pred_indicator: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub true_length: usize,
}

impl EncodedSample {
    pub fn max_len(&self) -> usize {
        self.token_ids.len()
    }

    /// Word-head positions: attended, not a sentinel, not a continuation.
    pub fn head_mask(&self, labels: &LabelMap) -> Vec<u8> {
        let x = labels.continuation_id();
        (0..self.max_len())
            .map(|i| {
                let inner = i > 0 && i + 1 < self.true_length;
                u8::from(inner && Some(self.label_ids[i]) != x)
            })
            .collect()
    }

    pub fn check(&self) -> Result<(), EncodeError> {
        let l = self.token_ids.len();
        if self.label_ids.len() != l || self.pred_indicator.len() != l || self.attention_mask.len() != l {
            return Err(EncodeError::Format("sequence lengths differ".into()));
        }
        if self.true_length > l {
            return Err(EncodeError::Format("true_length exceeds sequence length".into()));
        }
        if self
            .attention_mask
            .iter()
            .enumerate()
            .any(|(i, &m)| m != u8::from(i < self.true_length))
        {
            return Err(EncodeError::Format("attention mask is not a right-padded prefix".into()));
        }
        let marks: Vec<usize> = self
            .pred_indicator
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(i, _)| i)
            .collect();
        if marks.len() != 1 || marks[0] >= self.true_length || self.pred_indicator[marks[0]] != 1 {
            return Err(EncodeError::Format("predicate indicator must mark one attended position".into()));
        }
        Ok(())
    }
}

/// How to handle labels absent from the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownLabels {
    Reject,
    /// Map to `[UNK]`; for evaluation data scored by label text.
    MapToUnk,
}

pub fn encode_sample(
    aligned: &AlignedTokenization,
    sample: &SrlSample,
    vocab: &Vocabulary,
    labels: &LabelMap,
    max_len: usize,
) -> Result<EncodedSample, EncodeError> {
    encode_with(aligned, sample.pred_index, vocab, labels, max_len, UnknownLabels::Reject)
}

pub fn encode_with(
    aligned: &AlignedTokenization,
    pred_index: usize,
    vocab: &Vocabulary,
    labels: &LabelMap,
    max_len: usize,
    unknown: UnknownLabels,
) -> Result<EncodedSample, EncodeError> {
    let n = aligned.len();
    if n > max_len {
        return Err(EncodeError::TooLong {
            required: n,
            max_len,
        });
    }
    let pad_token = vocab.pad_id() as u32;
    let mut token_ids = Vec::with_capacity(max_len);
    let mut label_ids = Vec::with_capacity(max_len);
    for (piece, label) in aligned.pieces.iter().zip(&aligned.labels) {
        let tid = vocab
            .id(piece)
            .ok_or_else(|| EncodeError::UnknownPiece(piece.clone()))?;
        token_ids.push(tid as u32);
        let lid = match (labels.id(label), unknown) {
            (Some(id), _) => id,
            (None, UnknownLabels::MapToUnk) => UNK_LABEL_ID,
            (None, UnknownLabels::Reject) => return Err(EncodeError::UnknownLabel(label.clone())),
        };
        label_ids.push(lid);
    }
    let pred_pos = aligned
        .first_piece_of(pred_index)
        .ok_or(EncodeError::MissingPredicate(pred_index))?;
    let mut pred_indicator = vec![0u8; max_len];
    pred_indicator[pred_pos] = 1;
    let mut attention_mask = vec![1u8; n];
    attention_mask.resize(max_len, 0);
    token_ids.resize(max_len, pad_token);
    label_ids.resize(max_len, PAD_LABEL_ID);
    Ok(EncodedSample {
        token_ids,
        label_ids,
        pred_indicator,
        attention_mask,
        true_length: n,
    })
}

/// Longest piece sequence, sentinels included.
pub fn compute_max_len<'a, I>(aligned: I) -> usize
where
    I: IntoIterator<Item = &'a AlignedTokenization>,
{
    aligned.into_iter().map(|a| a.len()).max().unwrap_or(0)
}

/// Recovers piece texts and label texts for the attended positions.
pub fn decode_sample(
    encoded: &EncodedSample,
    vocab: &Vocabulary,
    labels: &LabelMap,
) -> Option<(Vec<String>, Vec<String>)> {
    let mut pieces = Vec::with_capacity(encoded.true_length);
    let mut texts = Vec::with_capacity(encoded.true_length);
    for i in 0..encoded.true_length {
        pieces.push(vocab.token(encoded.token_ids[i] as usize)?.to_string());
        texts.push(labels.label(encoded.label_ids[i])?.to_string());
    }
    Some((pieces, texts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedHeader {
    pub max_len: usize,
    pub vocab_size: usize,
    pub num_labels: usize,
    /// Free-form provenance, typically the resolved run configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn write_encoded<W: Write>(
    header: &EncodedHeader,
    samples: &[EncodedSample],
    mut out: W,
) -> Result<(), EncodeError> {
    let header_json = serde_json::to_vec(header).map_err(|e| EncodeError::Format(e.to_string()))?;
    out.write_all(ENCODED_MAGIC)?;
    out.write_all(&ENCODED_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header_json.len() as u32).to_le_bytes())?;
    out.write_all(&header_json)?;
    out.write_all(&(samples.len() as u32).to_le_bytes())?;
    for s in samples {
        out.write_all(&(s.token_ids.len() as u32).to_le_bytes())?;
        for &t in &s.token_ids {
            out.write_all(&t.to_le_bytes())?;
        }
        for &t in &s.label_ids {
            out.write_all(&t.to_le_bytes())?;
        }
        out.write_all(&s.pred_indicator)?;
        out.write_all(&s.attention_mask)?;
        out.write_all(&(s.true_length as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EncodeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| EncodeError::Format(format!("truncated file: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, EncodeError> {
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)
        .map_err(|e| EncodeError::Format(format!("truncated file: {e}")))?;
    Ok(b)
}

pub fn read_encoded<R: Read>(mut input: R) -> Result<(EncodedHeader, Vec<EncodedSample>), EncodeError> {
    let magic = read_bytes(&mut input, 8)?;
    if magic != ENCODED_MAGIC {
        return Err(EncodeError::Format("not an encoded dataset (bad magic)".into()));
    }
    let version = read_u32(&mut input)?;
    if version != ENCODED_FORMAT_VERSION {
        return Err(EncodeError::Format(format!(
            "format version {version}, expected {ENCODED_FORMAT_VERSION}"
        )));
    }
    let header_len = read_u32(&mut input)? as usize;
    let header: EncodedHeader = serde_json::from_slice(&read_bytes(&mut input, header_len)?)
        .map_err(|e| EncodeError::Format(format!("header: {e}")))?;
    let count = read_u32(&mut input)? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        if len != header.max_len {
            return Err(EncodeError::Format(format!(
                "record length {len} differs from header max_len {}",
                header.max_len
            )));
        }
        let mut token_ids = Vec::with_capacity(len);
        for _ in 0..len {
            token_ids.push(read_u32(&mut input)?);
        }
        let mut label_ids = Vec::with_capacity(len);
        for _ in 0..len {
            label_ids.push(read_u32(&mut input)?);
        }
        let pred_indicator = read_bytes(&mut input, len)?;
        let attention_mask = read_bytes(&mut input, len)?;
        let true_length = read_u32(&mut input)? as usize;
        let s = EncodedSample {
            token_ids,
            label_ids,
            pred_indicator,
            attention_mask,
            true_length,
        };
        s.check()?;
        samples.push(s);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(EncodeError::Format("trailing bytes after last record".into()));
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wordpiece::{tokenize_with_labels, CLS, SEP};

    fn sample(words: &[&str], bio: &[&str], pred: usize) -> SrlSample {
        SrlSample {
            seq_words: words.iter().map(|s| s.to_string()).collect(),
            bio: bio.iter().map(|s| s.to_string()).collect(),
            pred_index: pred,
            pred_sense: words[pred].to_string(),
            sentence_ref: 0,
            predicate_column: 0,
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_entries([PAD, UNK, CLS, SEP, "a", "b", "c", "##d"]).unwrap()
    }

    #[test]
    fn label_map_reserved_then_first_seen() {
        let m = LabelMap::build(&[sample(&["a", "b"], &["O", "B-V"], 1)]);
        assert_eq!(m.labels(), &["[UNK]", "[PAD]", "X", "O", "B-V"]);
        let m = LabelMap::build(&[sample(&["a", "b"], &["B-V", "O"], 0)]);
        assert_eq!(m.labels(), &["[UNK]", "[PAD]", "X", "B-V", "O"]);
    }

    #[test]
    fn outside_label_always_present() {
        let m = LabelMap::build(&[sample(&["a", "b"], &["B-V", "B-A1"], 0)]);
        assert_eq!(m.id("O"), Some(5));
    }

    #[test]
    fn label_map_text_round_trip() {
        let m = LabelMap::build(&[sample(&["a", "b"], &["B-A0", "B-V"], 1)]);
        let back = LabelMap::read(m.to_text().as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn label_map_rejects_gaps_and_bad_reserved() {
        assert!(LabelMap::read("[UNK]\t0\n[PAD]\t2\n".as_bytes()).is_err());
        assert!(LabelMap::read("[PAD]\t0\n[UNK]\t1\n".as_bytes()).is_err());
    }

    #[test]
    fn padding_mask_for_five_pieces() {
        let s = sample(&["a", "b", "c"], &["B-A0", "B-V", "O"], 1);
        let v = vocab();
        let a = tokenize_with_labels(&s, &v);
        assert_eq!(a.len(), 5);
        let m = LabelMap::build([&s]);
        let e = encode_sample(&a, &s, &v, &m, 8).unwrap();
        assert_eq!(e.attention_mask, vec![1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(e.pred_indicator, vec![0, 0, 1, 0, 0, 0, 0, 0]);
        assert_eq!(&e.token_ids[5..], &[0, 0, 0]);
        assert_eq!(&e.label_ids[5..], &[PAD_LABEL_ID; 3]);
        assert_eq!(e.head_mask(&m), vec![0, 1, 1, 1, 0, 0, 0, 0]);
        e.check().unwrap();
    }

    #[test]
    fn indicator_marks_first_piece_of_split_predicate() {
        let s = sample(&["a", "cd"], &["B-A0", "B-V"], 1);
        let v = vocab();
        let a = tokenize_with_labels(&s, &v);
        assert_eq!(a.pieces, vec![CLS, "a", "c", "##d", SEP]);
        let m = LabelMap::build([&s]);
        let e = encode_sample(&a, &s, &v, &m, 5).unwrap();
        assert_eq!(e.pred_indicator, vec![0, 0, 1, 0, 0]);
        assert_eq!(e.head_mask(&m), vec![0, 1, 1, 0, 0]);
    }

    #[test]
    fn too_long_reports_required_length() {
        let s = sample(&["a", "b", "c"], &["B-A0", "B-V", "O"], 1);
        let v = vocab();
        let a = tokenize_with_labels(&s, &v);
        let m = LabelMap::build([&s]);
        match encode_sample(&a, &s, &v, &m, 4) {
            Err(EncodeError::TooLong { required, max_len }) => assert_eq!((required, max_len), (5, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_policy() {
        let s = sample(&["a", "b"], &["B-ZZ", "B-V"], 1);
        let v = vocab();
        let a = tokenize_with_labels(&s, &v);
        let m = LabelMap::build(&[sample(&["a", "b"], &["O", "B-V"], 1)]);
        assert!(matches!(
            encode_sample(&a, &s, &v, &m, 6),
            Err(EncodeError::UnknownLabel(l)) if l == "B-ZZ"
        ));
        let e = encode_with(&a, 1, &v, &m, 6, UnknownLabels::MapToUnk).unwrap();
        assert_eq!(e.label_ids[1], UNK_LABEL_ID);
    }

    #[test]
    fn compute_max_len_edges() {
        assert_eq!(compute_max_len(std::iter::empty()), 0);
        let v = vocab();
        let s = sample(&["a", "b", "c", "a", "b"], &["O", "O", "B-V", "O", "O"], 2);
        let a = tokenize_with_labels(&s, &v);
        assert_eq!(compute_max_len([&a]), 7);
    }

    #[test]
    fn truncated_encoded_file_is_rejected() {
        let s = sample(&["a", "b"], &["B-A0", "B-V"], 1);
        let v = vocab();
        let a = tokenize_with_labels(&s, &v);
        let m = LabelMap::build([&s]);
        let e = encode_sample(&a, &s, &v, &m, 6).unwrap();
        let header = EncodedHeader {
            max_len: 6,
            vocab_size: v.len(),
            num_labels: m.len(),
            config: serde_json::Value::Null,
        };
        let mut buf = Vec::new();
        write_encoded(&header, std::slice::from_ref(&e), &mut buf).unwrap();
        let (h, back) = read_encoded(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, vec![e]);
        assert!(read_encoded(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_encoded(&extra[..]).is_err());
    }
}
