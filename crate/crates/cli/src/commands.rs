use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use srl_core::cleaner::{clean_corpus_with, CleaningReport};
use srl_core::corpus_io::{parse_corpus, serialize_corpus, ColumnLayout, Corpus};
use srl_core::encoder::{
    compute_max_len, encode_with, read_encoded, write_encoded, EncodedHeader, EncodedSample, LabelMap,
    UnknownLabels,
};
use srl_core::evaluation::{crossval, render_metrics, CrossvalReport, MetricReport};
use srl_core::model::{
    evaluate_encoded, predict, read_checkpoint, train, write_checkpoint, ModelParams,
};
use srl_core::sample_gen::{generate_samples, read_samples, write_samples, PredicateMode, SrlSample};
use srl_core::synthetic;
use srl_core::wordpiece::{tokenize_unlabelled, tokenize_with_labels, Vocabulary};

use crate::artifact::{
    check_output, read_bytes, read_text, split_text_header, write_atomic, Kind, Provenance,
};
use crate::config::{Layout, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn require_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::Input(format!("{}: input file does not exist", path.display())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Artifact readers

fn read_corpus(path: &Path, layout: &ColumnLayout) -> Result<(Corpus, Vec<srl_core::corpus_io::Diagnostic>)> {
    let bytes = read_bytes(path)?;
    // A provenance line, when present, must be valid even though the parser
    // would skip it as a comment.
    if let Some(end) = bytes.iter().position(|&b| b == b'\n') {
        if let Ok(first) = std::str::from_utf8(&bytes[..=end]) {
            split_text_header(first, Kind::Corpus, path, false)?;
        }
    }
    let out = parse_corpus(&bytes, layout);
    Ok((out.corpus, out.diagnostics))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    require_input(path)?;
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Vocabulary::load(std::io::BufReader::new(file))?)
}

fn read_labelmap(path: &Path) -> Result<LabelMap> {
    let text = read_text(path)?;
    let (_, body) = split_text_header(&text, Kind::LabelMap, path, true)?;
    Ok(LabelMap::read(body.as_bytes())?)
}

fn read_sample_file(path: &Path) -> Result<Vec<SrlSample>> {
    let text = read_text(path)?;
    let (_, body) = split_text_header(&text, Kind::Samples, path, true)?;
    Ok(read_samples(body.as_bytes())?)
}

fn read_encoded_file(path: &Path) -> Result<(EncodedHeader, Vec<EncodedSample>)> {
    let bytes = read_bytes(path)?;
    let (header, samples) = read_encoded(&bytes[..])?;
    Provenance::check(&header.config, Kind::Encoded, path)?;
    Ok((header, samples))
}

fn read_model(path: &Path) -> Result<ModelParams> {
    let bytes = read_bytes(path)?;
    let (params, metadata) = read_checkpoint(&bytes[..])?;
    Provenance::check(&metadata, Kind::Model, path)?;
    Ok(params)
}

fn expect_eq(what: &str, left: (&str, usize), right: (&str, usize)) -> Result<()> {
    if left.1 != right.1 {
        return Err(CliError::Mismatch(format!(
            "{what}: {} has {} but {} has {}",
            left.0, left.1, right.0, right.1
        )));
    }
    Ok(())
}

fn json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Serialize, Deserialize)]
pub struct CleaningReportFile {
    pub provenance: Provenance,
    pub report: CleaningReport,
}

pub fn clean(cfg: &RunConfig, input: &Path, out: &Path, report: &Path, report_json: Option<&Path>) -> Result<()> {
    require_input(input)?;
    for p in [Some(out), Some(report), report_json].into_iter().flatten() {
        check_output(p)?;
    }
    let layout = match cfg.layout {
        Layout::Canonical => ColumnLayout::CANONICAL,
        Layout::DoublePos => ColumnLayout::DOUBLE_POS,
    };
    let (corpus, diagnostics) = read_corpus(input, &layout)?;
    let (cleaned, rep) = clean_corpus_with(&corpus, &diagnostics, &cfg.cleaner_config());
    info!(
        "cleaned {}: {} retained, {} deleted",
        input.display(),
        rep.retained_sentences,
        rep.deleted_sentences
    );

    let mut text = Provenance::new(Kind::Corpus, "clean", cfg).text_line();
    text.push_str(&serialize_corpus(&cleaned));
    write_atomic(out, text.as_bytes())?;

    let mut rendered = Provenance::new(Kind::CleaningReport, "clean", cfg).text_line();
    rendered.push_str(&rep.render());
    write_atomic(report, rendered.as_bytes())?;

    if let Some(path) = report_json {
        let file = CleaningReportFile {
            provenance: Provenance::new(Kind::CleaningReport, "clean", cfg),
            report: rep,
        };
        write_atomic(path, &json_pretty(&file))?;
    }
    Ok(())
}

pub fn prepare(cfg: &RunConfig, input: &Path, out: &Path, predicates: Option<PredicateMode>) -> Result<()> {
    require_input(input)?;
    check_output(out)?;
    let mut cfg = cfg.clone();
    if let Some(mode) = predicates {
        cfg.predicates = mode;
    }
    let (corpus, diagnostics) = read_corpus(input, &ColumnLayout::CANONICAL)?;
    if let Some(d) = diagnostics.first() {
        return Err(CliError::Input(format!(
            "{}: line {}: {}; run `srl clean` first",
            input.display(),
            d.line,
            d.message
        )));
    }
    let samples = generate_samples(&corpus, cfg.predicates, &cfg.sample_config())?;
    info!("{} samples from {} sentences", samples.len(), corpus.len());
    let mut buf = Provenance::new(Kind::Samples, "prepare", &cfg).text_line().into_bytes();
    write_samples(&samples, &mut buf)?;
    write_atomic(out, &buf)
}

pub enum LabelSource<'a> {
    Existing(&'a Path),
    New(&'a Path),
}

pub fn encode(
    cfg: &RunConfig,
    samples_path: &Path,
    vocab_path: &Path,
    labels: LabelSource<'_>,
    max_len: Option<usize>,
    out: &Path,
) -> Result<()> {
    require_input(samples_path)?;
    check_output(out)?;
    let samples = read_sample_file(samples_path)?;
    let vocab = read_vocab(vocab_path)?;
    let (label_map, new_path) = match labels {
        LabelSource::Existing(p) => (read_labelmap(p)?, None),
        LabelSource::New(p) => {
            check_output(p)?;
            (LabelMap::build(&samples), Some(p))
        }
    };
    let aligned: Vec<_> = samples.iter().map(|s| tokenize_with_labels(s, &vocab)).collect();
    let max_len = max_len.unwrap_or_else(|| compute_max_len(&aligned));
    let encoded = samples
        .iter()
        .zip(&aligned)
        .enumerate()
        .map(|(i, (s, a))| {
            encode_with(a, s.pred_index, &vocab, &label_map, max_len, UnknownLabels::Reject)
                .map_err(|e| CliError::Input(format!("sample {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let header = EncodedHeader {
        max_len,
        vocab_size: vocab.len(),
        num_labels: label_map.len(),
        config: Provenance::new(Kind::Encoded, "encode", cfg).to_value(),
    };
    let mut buf = Vec::new();
    write_encoded(&header, &encoded, &mut buf)?;
    if let Some(p) = new_path {
        let mut text = Provenance::new(Kind::LabelMap, "encode", cfg).text_line();
        text.push_str(&label_map.to_text());
        write_atomic(p, text.as_bytes())?;
    }
    write_atomic(out, &buf)
}

pub fn train_cmd(
    cfg: &RunConfig,
    data: &Path,
    val: Option<&Path>,
    labels_path: &Path,
    out: &Path,
    log_path: Option<&Path>,
) -> Result<()> {
    require_input(data)?;
    require_input(labels_path)?;
    check_output(out)?;
    if let Some(p) = log_path {
        check_output(p)?;
    }
    let (header, train_set) = read_encoded_file(data)?;
    let labels = read_labelmap(labels_path)?;
    expect_eq("label count", ("training data", header.num_labels), ("label map", labels.len()))?;
    let val_set = match val {
        Some(p) => {
            let (h, v) = read_encoded_file(p)?;
            expect_eq("sequence length", ("training data", header.max_len), ("validation data", h.max_len))?;
            expect_eq("vocabulary size", ("training data", header.vocab_size), ("validation data", h.vocab_size))?;
            expect_eq("label count", ("training data", header.num_labels), ("validation data", h.num_labels))?;
            v
        }
        None => Vec::new(),
    };
    let model_cfg = cfg.model_config(header.vocab_size, labels.len(), header.max_len);
    let outcome = train(&train_set, &val_set, &model_cfg, &cfg.train_config(), &labels)?;
    info!("trained {} epochs, kept epoch {:?}", outcome.log.len(), outcome.best_epoch);

    let mut buf = Vec::new();
    write_checkpoint(&outcome.params, &Provenance::new(Kind::Model, "train", cfg).to_value(), &mut buf)?;
    write_atomic(out, &buf)?;

    if let Some(p) = log_path {
        let mut text = Provenance::new(Kind::EpochLog, "train", cfg).text_line();
        for e in &outcome.log {
            text.push_str(&serde_json::to_string(e).expect("serialisable"));
            text.push('\n');
        }
        write_atomic(p, text.as_bytes())?;
    }
    Ok(())
}

/// Per-word labels for one sentence; returns `(word, label)` pairs.
pub fn predict_cmd(
    model: &Path,
    vocab_path: &Path,
    labels_path: &Path,
    sentence: &str,
    predicate: usize,
) -> Result<Vec<(String, String)>> {
    require_input(model)?;
    require_input(labels_path)?;
    let params = read_model(model)?;
    let vocab = read_vocab(vocab_path)?;
    let labels = read_labelmap(labels_path)?;
    expect_eq("vocabulary size", ("model", params.config.vocab_size), ("vocabulary", vocab.len()))?;
    expect_eq("label count", ("model", params.config.num_labels), ("label map", labels.len()))?;

    let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
    if predicate >= words.len() {
        return Err(CliError::Input(format!(
            "predicate index {predicate} out of range for {} words",
            words.len()
        )));
    }
    let aligned = tokenize_unlabelled(&words, &vocab);
    let encoded = encode_with(
        &aligned,
        predicate,
        &vocab,
        &labels,
        params.config.max_len,
        UnknownLabels::MapToUnk,
    )?;
    let piece_labels = predict(&params, &encoded, &labels)?;
    Ok(words
        .iter()
        .enumerate()
        .map(|(w, word)| {
            let i = aligned.first_piece_of(w).expect("every word has a head piece");
            (word.clone(), piece_labels[i].clone())
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
pub struct MetricsFile {
    pub provenance: Provenance,
    pub loss: f64,
    pub metrics: MetricReport,
}

pub fn evaluate(cfg: &RunConfig, model: &Path, data: &Path, labels_path: &Path, out: Option<&Path>) -> Result<String> {
    require_input(model)?;
    require_input(data)?;
    require_input(labels_path)?;
    if let Some(p) = out {
        check_output(p)?;
    }
    let params = read_model(model)?;
    let (header, samples) = read_encoded_file(data)?;
    let labels = read_labelmap(labels_path)?;
    expect_eq("sequence length", ("model", params.config.max_len), ("data", header.max_len))?;
    expect_eq("vocabulary size", ("model", params.config.vocab_size), ("data", header.vocab_size))?;
    expect_eq("label count", ("model", params.config.num_labels), ("label map", labels.len()))?;
    expect_eq("label count", ("data", header.num_labels), ("label map", labels.len()))?;
    if samples.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", data.display())));
    }
    let (loss, metrics) = evaluate_encoded(&params, &samples, &labels, &cfg.score_options())?;
    let text = render_metrics(&metrics);
    if let Some(p) = out {
        let file = MetricsFile {
            provenance: Provenance::new(Kind::Metrics, "evaluate", cfg),
            loss,
            metrics,
        };
        write_atomic(p, &json_pretty(&file))?;
    }
    Ok(text)
}

#[derive(Serialize, Deserialize)]
pub struct CrossvalFile {
    pub provenance: Provenance,
    pub report: CrossvalReport,
}

pub fn crossval_cmd(
    cfg: &RunConfig,
    samples_path: &Path,
    vocab_path: &Path,
    out: Option<&Path>,
    table: Option<&Path>,
) -> Result<String> {
    require_input(samples_path)?;
    for p in [out, table].into_iter().flatten() {
        check_output(p)?;
    }
    let samples = read_sample_file(samples_path)?;
    let vocab = read_vocab(vocab_path)?;
    let report = crossval(&samples, &vocab, &cfg.crossval_config())?;
    let rendered = report.render_table();
    if let Some(p) = table {
        let mut text = Provenance::new(Kind::Crossval, "crossval", cfg).text_line();
        text.push_str(&rendered);
        write_atomic(p, text.as_bytes())?;
    }
    if let Some(p) = out {
        let file = CrossvalFile {
            provenance: Provenance::new(Kind::Crossval, "crossval", cfg),
            report,
        };
        write_atomic(p, &json_pretty(&file))?;
    }
    Ok(rendered)
}

pub fn synth(cfg: &RunConfig, samples: usize, out: &Path, vocab_out: &Path) -> Result<()> {
    check_output(out)?;
    check_output(vocab_out)?;
    if samples == 0 {
        return Err(CliError::Input("--samples must be at least 1".into()));
    }
    let corpus = synthetic::corpus(samples, cfg.seed);
    let mut text = Provenance::new(Kind::Corpus, "synth", cfg).text_line();
    text.push_str(&serialize_corpus(&corpus));
    write_atomic(out, text.as_bytes())?;
    write_atomic(vocab_out, synthetic::vocabulary().to_text().as_bytes())
}
