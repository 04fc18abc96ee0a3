#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srl_core::corpus_io::{parse_corpus, ColumnLayout, Corpus};
use srl_core::encoder::{encode_sample, EncodedSample, LabelMap};
use srl_core::model::{ModelConfig, ModelParams, LAYER_NORM_EPS};
use srl_core::sample_gen::SrlSample;
use srl_core::wordpiece::{tokenize_with_labels, Vocabulary, CLS, PAD, SEP, UNK};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap()
}

pub fn fixture_corpus(name: &str) -> Corpus {
    let out = parse_corpus(&fixture_bytes(name), &ColumnLayout::CANONICAL);
    assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
    out.corpus
}

pub fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// The retokenization example sentence, labelled for the predicate "شد".
pub fn retokenization_sample() -> SrlSample {
    let words = [
        ("در", "B-TMP"),
        ("ابتدای", "O"),
        ("این", "O"),
        ("مانور", "O"),
        ("آزمایشی", "O"),
        ("نشست", "B-A1"),
        ("و", "O"),
        ("برخاست", "O"),
        ("هلی_کوپتر", "O"),
        ("و", "O"),
        ("عملیات", "O"),
        ("راپل", "O"),
        (")", "O"),
        ("پیاده", "B-PRD"),
        ("کردن", "O"),
        ("تکاورهای", "O"),
        ("ویژه", "O"),
        ("(", "O"),
        ("اجرا", "B-NVE"),
        ("شد", "B-V"),
        (".", "O"),
    ];
    SrlSample {
        seq_words: words.iter().map(|(w, _)| w.to_string()).collect(),
        bio: words.iter().map(|(_, l)| l.to_string()).collect(),
        pred_index: 19,
        pred_sense: "شد".to_string(),
        sentence_ref: 0,
        predicate_column: 0,
    }
}

/// Vocabulary under which the example splits as expected:
/// "آزمایشی" and "هلی_کوپتر" are unknown, "راپل" and "تکاورهای" split.
pub fn retokenization_vocab() -> Vocabulary {
    let mut entries = strings(&[PAD, UNK, CLS, SEP]);
    for w in [
        "در", "ابتدای", "این", "مانور", "نشست", "و", "برخاست", "عملیات", ")", "پیاده", "کردن",
        "ویژه", "(", "اجرا", "شد", ".", "راپ", "##ل", "تکاور", "##های",
    ] {
        entries.push(w.to_string());
    }
    Vocabulary::from_entries(entries).unwrap()
}

const ALPHABET: [char; 5] = ['a', 'b', 'c', 'd', 'é'];

pub fn random_word<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect()
}

/// Specials plus `size - 4` distinct random entries, about a third of them
/// continuation pieces.
pub fn random_vocab<R: Rng>(rng: &mut R, size: usize) -> Vocabulary {
    let mut entries = strings(&[PAD, UNK, CLS, SEP]);
    while entries.len() < size {
        let mut w = random_word(rng, 4);
        if rng.random_bool(0.35) {
            w = format!("##{w}");
        }
        if !entries.contains(&w) {
            entries.push(w);
        }
    }
    Vocabulary::from_entries(entries).unwrap()
}

const ROLE_LABELS: [&str; 5] = ["B-A0", "B-A1", "B-TMP", "B-LOC", "B-MNR"];

pub fn random_sample<R: Rng>(rng: &mut R) -> SrlSample {
    let n = rng.random_range(1..=10);
    let seq_words: Vec<String> = (0..n).map(|_| random_word(rng, 6)).collect();
    let pred_index = rng.random_range(0..n);
    let bio = (0..n)
        .map(|i| {
            if i == pred_index {
                if rng.random_bool(0.5) { "B-V" } else { "B-NVE" }.to_string()
            } else if rng.random_bool(0.3) {
                ROLE_LABELS[rng.random_range(0..ROLE_LABELS.len())].to_string()
            } else {
                "O".to_string()
            }
        })
        .collect();
    SrlSample {
        pred_sense: seq_words[pred_index].clone(),
        seq_words,
        bio,
        pred_index,
        sentence_ref: 0,
        predicate_column: 0,
    }
}

/// Random samples encoded against a vocabulary containing every single
/// character of the alphabet, so no word is unknown.
pub fn random_encoded_batch(seed: u64, count: usize) -> (Vec<EncodedSample>, Vocabulary, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = strings(&[PAD, UNK, CLS, SEP]);
    for c in ALPHABET {
        entries.push(c.to_string());
        entries.push(format!("##{c}"));
    }
    entries.extend(strings(&["ab", "##cd", "bé"]));
    let vocab = Vocabulary::from_entries(entries).unwrap();
    let samples: Vec<SrlSample> = (0..count)
        .map(|_| {
            let mut s = random_sample(&mut rng);
            s.seq_words.iter_mut().for_each(|w| *w = w.chars().take(2).collect());
            s
        })
        .collect();
    let labels = LabelMap::build(&samples);
    let aligned: Vec<_> = samples.iter().map(|s| tokenize_with_labels(s, &vocab)).collect();
    let max_len = aligned.iter().map(|a| a.len()).max().unwrap();
    let encoded = samples
        .iter()
        .zip(&aligned)
        .map(|(s, a)| encode_sample(a, s, &vocab, &labels, max_len).unwrap())
        .collect();
    (encoded, vocab, labels)
}

pub fn tiny_config(vocab: usize, labels: usize, max_len: usize) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_dim: 32,
        num_heads: 4,
        ff_dim: 64,
        vocab_size: vocab,
        num_labels: labels,
        max_len,
        dropout_rate: 0.0,
        seed: 11,
    }
}

// ---------------------------------------------------------------------------
// Scalar-loop reference forward pass. Shares nothing with the library's
// matrix code beyond reading parameter values.

type Mat = Vec<Vec<f64>>;

fn get2(a: &ndarray::Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn get1(a: &ndarray::Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

fn matmul_bias(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let (n, k, m) = (x.len(), w.len(), b.len());
    let mut y = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = b[j];
            for t in 0..k {
                acc += x[i][t] * w[t][j];
            }
            y[i][j] = acc;
        }
    }
    y
}

fn layer_norm_ref(x: &Mat, g: &[f64], b: &[f64]) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = (var + LAYER_NORM_EPS).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| g[j] * (v - mean) / s + b[j])
                .collect()
        })
        .collect()
}

fn gelu_ref(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Logits `L x num_labels` for one sample, computed with plain loops.
pub fn reference_logits(p: &ModelParams, s: &EncodedSample) -> Mat {
    let cfg = &p.config;
    let (n, h) = (s.token_ids.len(), cfg.hidden_dim);
    let d = h / cfg.num_heads;
    let tok = get2(&p.token_embedding);
    let pos = get2(&p.position_embedding);
    let ind = get2(&p.indicator_embedding);
    let mut x: Mat = (0..n)
        .map(|i| {
            (0..h)
                .map(|j| {
                    tok[s.token_ids[i] as usize][j] + pos[i][j] + ind[s.pred_indicator[i] as usize][j]
                })
                .collect()
        })
        .collect();
    for l in &p.layers {
        let q = matmul_bias(&x, &get2(&l.wq), &get1(&l.bq));
        let k = matmul_bias(&x, &get2(&l.wk), &get1(&l.bk));
        let v = matmul_bias(&x, &get2(&l.wv), &get1(&l.bv));
        let mut ctx = vec![vec![0.0; h]; n];
        for head in 0..cfg.num_heads {
            let off = head * d;
            for i in 0..n {
                let mut scores = vec![f64::NEG_INFINITY; n];
                for j in 0..n {
                    if s.attention_mask[j] == 1 {
                        let dot: f64 = (0..d).map(|t| q[i][off + t] * k[j][off + t]).sum();
                        scores[j] = dot / (d as f64).sqrt();
                    }
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|&z| if z.is_finite() { (z - max).exp() } else { 0.0 }).collect();
                let z: f64 = exps.iter().sum();
                for t in 0..d {
                    ctx[i][off + t] = (0..n).map(|j| exps[j] / z * v[j][off + t]).sum();
                }
            }
        }
        let attn = matmul_bias(&ctx, &get2(&l.wo), &get1(&l.bo));
        let res1: Mat = (0..n).map(|i| (0..h).map(|j| x[i][j] + attn[i][j]).collect()).collect();
        let hid = layer_norm_ref(&res1, &get1(&l.ln1_gamma), &get1(&l.ln1_beta));
        let mut ff = matmul_bias(&hid, &get2(&l.w1), &get1(&l.b1));
        ff.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = gelu_ref(*v)));
        let ff2 = matmul_bias(&ff, &get2(&l.w2), &get1(&l.b2));
        let res2: Mat = (0..n).map(|i| (0..h).map(|j| hid[i][j] + ff2[i][j]).collect()).collect();
        x = layer_norm_ref(&res2, &get1(&l.ln2_gamma), &get1(&l.ln2_beta));
    }
    matmul_bias(&x, &get2(&p.head_weights), &get1(&p.head_bias))
}

/// Mean cross-entropy over attended positions, with plain loops.
pub fn reference_loss(logits: &[Mat], batch: &[EncodedSample]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (lg, s) in logits.iter().zip(batch) {
        for i in 0..s.token_ids.len() {
            if s.attention_mask[i] == 0 {
                continue;
            }
            let row = &lg[i];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            total += -(row[s.label_ids[i] as usize] - max - z.ln());
            count += 1;
        }
    }
    total / count as f64
}
