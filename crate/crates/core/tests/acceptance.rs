//! End-to-end acceptance checks. Each criterion runs in isolation and prints
//! one PASS/FAIL line; the test fails if any criterion fails.
//!
//! Run with `cargo test -p srl-core --test acceptance -- --nocapture`.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srl_core::cleaner::{clean_corpus, ActionKind, Rule};
use srl_core::corpus_io::{parse_corpus, serialize_corpus, ColumnLayout};
use srl_core::encoder::{decode_sample, encode_sample, EncodedSample, LabelMap};
use srl_core::evaluation::{crossval, make_folds, score, CrossvalConfig, ScoreOptions};
use srl_core::model::*;
use srl_core::sample_gen::{generate_samples, PredicateMode, SampleConfig, SrlSample};
use srl_core::synthetic;
use srl_core::wordpiece::{tokenize_with_labels, tokenize_word, Vocabulary, UNK};

fn within(start: Instant, limit: Duration) {
    let took = start.elapsed();
    assert!(took < limit, "took {took:?}, limit {limit:?}");
}

fn corpus_round_trip() {
    let t = Instant::now();
    let bytes = fixture_bytes("corpus50.conll");
    let out = parse_corpus(&bytes, &ColumnLayout::CANONICAL);
    assert!(out.diagnostics.is_empty());
    assert_eq!(out.corpus.len(), 50);
    assert_eq!(serialize_corpus(&out.corpus).as_bytes(), &bytes[..]);
    within(t, Duration::from_secs(1));
}

fn cleaner_rules() {
    let t = Instant::now();
    let out = parse_corpus(&fixture_bytes("defects.conll"), &ColumnLayout::CANONICAL);
    let (_, report) = clean_corpus(&out.corpus, &out.diagnostics);
    use ActionKind::*;
    use Rule::*;
    let expected = vec![
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
    ];
    let got: Vec<_> = report.actions.iter().map(|a| (a.sentence_index, a.rule, a.action)).collect();
    assert_eq!(got, expected);
    assert_eq!(report.total_sentences, 11);
    assert_eq!(report.deleted_sentences, 6);
    assert_eq!(report.repaired_sentences, 4);
    assert_eq!(report.retained_sentences, report.total_sentences - report.deleted_sentences);
    within(t, Duration::from_secs(1));
}

fn sample_explosion() {
    let corpus = fixture_corpus("example.conll");
    let samples = generate_samples(&corpus, PredicateMode::AllPredicates, &SampleConfig::default()).unwrap();
    assert_eq!(samples.len(), 2);
    let senses: Vec<&str> = samples.iter().map(|s| s.pred_sense.as_str()).collect();
    assert_eq!(senses, ["اجرا", "خیز"]);
    assert_eq!((samples[0].pred_index, samples[1].pred_index), (2, 11));
    fn placed(s: &SrlSample) -> Vec<(usize, &str)> {
        s.bio.iter().enumerate().filter(|(_, l)| *l != "O").map(|(i, l)| (i, l.as_str())).collect()
    }
    assert_eq!(placed(&samples[0]), [(2, "B-NVE"), (3, "B-A1")]);
    assert_eq!(placed(&samples[1]), [(0, "B-A0"), (1, "B-MNR"), (8, "B-A1"), (11, "B-V")]);
}

/// Longest vocabulary entry that prefixes the remainder, found by scanning
/// all entries.
fn reference_tokenize(word: &str, vocab: &Vocabulary) -> Vec<String> {
    let mut rest = word;
    let mut out: Vec<String> = Vec::new();
    while !rest.is_empty() {
        let initial = out.is_empty();
        let best = vocab
            .entries()
            .iter()
            .filter_map(|e| {
                let body = match (initial, e.strip_prefix("##")) {
                    (true, None) => e.as_str(),
                    (false, Some(b)) => b,
                    _ => return None,
                };
                (!body.is_empty() && rest.starts_with(body)).then_some((body.len(), e))
            })
            .max_by_key(|(n, _)| *n);
        let Some((n, e)) = best else {
            return vec![UNK.to_string()];
        };
        out.push(e.clone());
        rest = &rest[n..];
    }
    out
}

fn wordpiece_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..2000 {
        let word = random_word(&mut rng, 8);
        let mut entries = random_vocab(&mut rng, 24).entries().to_vec();
        let chars: Vec<char> = word.chars().collect();
        for _ in 0..4 {
            let a = rng.random_range(0..chars.len());
            let b = rng.random_range(a + 1..=chars.len());
            let frag: String = chars[a..b].iter().collect();
            let e = if a == 0 { frag } else { format!("##{frag}") };
            if !entries.contains(&e) {
                entries.push(e);
            }
        }
        let vocab = Vocabulary::from_entries(entries).unwrap();
        assert_eq!(tokenize_word(&word, &vocab), reference_tokenize(&word, &vocab), "case {case}");
    }
    assert_eq!(tokenize_word("تکاورهای", &retokenization_vocab()), ["تکاور", "##های"]);
    within(t, Duration::from_secs(10));
}

fn alignment_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let vocab = random_vocab(&mut rng, 30);
        let s = random_sample(&mut rng);
        let a = tokenize_with_labels(&s, &vocab);
        assert_eq!(a.head_mask.iter().map(|&h| h as usize).sum::<usize>(), s.seq_words.len());
        let mut heads: Vec<&String> = (0..a.len()).filter(|&i| a.head_mask[i] == 1).map(|i| &a.labels[i]).collect();
        let mut source: Vec<&String> = s.bio.iter().collect();
        heads.sort();
        source.sort();
        assert_eq!(heads, source);
        for (w, word) in s.seq_words.iter().enumerate() {
            let pieces: Vec<&str> = (0..a.len())
                .filter(|&i| a.word_index[i] == Some(w))
                .map(|i| a.pieces[i].as_str())
                .collect();
            if pieces != [UNK] {
                let joined: String = pieces.iter().map(|p| p.trim_start_matches("##")).collect();
                assert_eq!(&joined, word);
            }
        }
    }
}

fn encoding_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let vocab = random_vocab(&mut rng, 40);
        let samples: Vec<SrlSample> = (0..20).map(|_| random_sample(&mut rng)).collect();
        let labels = LabelMap::build(&samples);
        let aligned: Vec<_> = samples.iter().map(|s| tokenize_with_labels(s, &vocab)).collect();
        let max_len = aligned.iter().map(|a| a.len()).max().unwrap() + rng.random_range(0..3);
        for (s, a) in samples.iter().zip(&aligned) {
            let e = encode_sample(a, s, &vocab, &labels, max_len).unwrap();
            assert_eq!(e.attention_mask.iter().map(|&m| m as usize).sum::<usize>(), e.true_length);
            assert_eq!(e.pred_indicator.iter().map(|&m| m as usize).sum::<usize>(), 1);
            for i in e.true_length..max_len {
                assert_eq!(e.token_ids[i] as usize, vocab.pad_id());
                assert_eq!(labels.label(e.label_ids[i]), Some("[PAD]"));
            }
            let (_, texts) = decode_sample(&e, &vocab, &labels).unwrap();
            assert_eq!(texts, a.labels);
        }
    }
}

fn softmax_normalisation() {
    for seed in 0..10 {
        let (batch, vocab, labels) = random_encoded_batch(seed, 8);
        let mut cfg = tiny_config(vocab.len(), labels.len(), batch[0].max_len());
        cfg.seed = seed;
        let probs = forward(&init_params(&cfg), &batch).unwrap().probabilities();
        for row in probs.lanes(Axis(2)) {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}

/// Random batch over `labels` classes with arbitrary label ids.
fn raw_batch(rng: &mut ChaCha8Rng, vocab: usize, labels: u32, max_len: usize, size: usize) -> Vec<EncodedSample> {
    (0..size)
        .map(|_| {
            let n = rng.random_range(2..=max_len);
            let mut pred_indicator = vec![0; max_len];
            pred_indicator[rng.random_range(0..n)] = 1;
            EncodedSample {
                token_ids: (0..max_len).map(|_| rng.random_range(0..vocab as u32)).collect(),
                label_ids: (0..max_len).map(|_| rng.random_range(0..labels)).collect(),
                pred_indicator,
                attention_mask: (0..max_len).map(|i| u8::from(i < n)).collect(),
                true_length: n,
            }
        })
        .collect()
}

/// Denominator floor for relative gradient error. Central differences with
/// step 1e-4 carry truncation error near 1e-10 on gradients around 1e-7, so
/// smaller gradients are compared in absolute terms (1e-9).
const GRADIENT_FLOOR: f64 = 1e-6;

fn gradient_check() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = ModelConfig {
        num_layers: 2,
        hidden_dim: 32,
        num_heads: 4,
        ff_dim: 64,
        vocab_size: 10,
        num_labels: 4,
        max_len: 5,
        dropout_rate: 0.0,
        seed: 8,
    };
    let params = init_params(&cfg);
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let batch = raw_batch(&mut rng, cfg.vocab_size, 4, cfg.max_len, 3);
        let analytic = backward(&params, &batch).unwrap().to_flat();
        let base = params.to_flat();
        let mut probe = params.clone();
        let mut x = base.clone();
        for i in 0..base.len() {
            x[i] = base[i] + step;
            probe.set_flat(&x);
            let up = loss(&forward(&probe, &batch).unwrap().logits, &batch).unwrap();
            x[i] = base[i] - step;
            probe.set_flat(&x);
            let down = loss(&forward(&probe, &batch).unwrap().logits, &batch).unwrap();
            x[i] = base[i];
            let numeric = (up - down) / (2.0 * step);
            let denom = analytic[i].abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    println!("    max relative error {worst:.3e}");
    assert!(worst <= 1e-3, "max relative error {worst}");
    within(t, Duration::from_secs(60));
}

fn adamw_decoupling() {
    let (batch, vocab, labels) = random_encoded_batch(9, 2);
    let cfg = tiny_config(vocab.len(), labels.len(), batch[0].max_len());
    let mut p = init_params(&cfg);
    let before = p.to_flat();
    let train_cfg = TrainConfig {
        learning_rate: 0.01,
        weight_decay: 0.2,
        ..TrainConfig::default()
    };
    let mut state = OptimizerState::new(&p);
    adamw_step(&mut p, &ModelParams::zeros(&cfg), &mut state, &train_cfg);
    let factor = 1.0 - 0.01 * 0.2;
    assert!(p.to_flat().iter().zip(&before).all(|(a, b)| *a == b * factor));

    let c = 0.7;
    let mut x = [-1.5];
    let (mut m, mut v) = ([0.0], [0.0]);
    let (lr, wd, b1, b2, eps) = (0.05, 0.1, 0.9, 0.999, 1e-8);
    let opt = TrainConfig {
        learning_rate: lr,
        weight_decay: wd,
        adam_beta1: b1,
        adam_beta2: b2,
        adam_epsilon: eps,
        ..TrainConfig::default()
    };
    let (mut xe, mut me, mut ve): (f64, f64, f64) = (-1.5, 0.0, 0.0);
    for t in 1..=3 {
        let grad = [c * x[0]];
        adamw_update(&mut x, &grad, &mut m, &mut v, t as u64, &opt);
        let g = c * xe;
        me = b1 * me + (1.0 - b1) * g;
        ve = b2 * ve + (1.0 - b2) * g * g;
        let mh = me / (1.0 - b1.powi(t));
        let vh = ve / (1.0 - b2.powi(t));
        xe = xe * (1.0 - lr * wd) - lr * mh / (vh.sqrt() + eps);
        assert!((x[0] - xe).abs() < 1e-12);
    }
}

fn synthetic_encoded(n: usize, seed: u64) -> (Vec<EncodedSample>, Vocabulary, LabelMap) {
    let corpus = synthetic::corpus(n, seed);
    let samples = generate_samples(&corpus, PredicateMode::AllPredicates, &SampleConfig::default()).unwrap();
    let vocab = synthetic::vocabulary();
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

fn overfit() {
    let t = Instant::now();
    let (data, vocab, labels) = synthetic_encoded(10, 10);
    assert_eq!(data.len(), 10);
    let cfg = tiny_config(vocab.len(), labels.len(), data[0].max_len());
    let train_cfg = TrainConfig {
        epochs: 200,
        batch_size: 5,
        learning_rate: 3e-3,
        weight_decay: 0.0,
        seed: 10,
        ..TrainConfig::default()
    };
    let a = train(&data, &[], &cfg, &train_cfg, &labels).unwrap();
    let accuracy = token_accuracy(&a.params, &data).unwrap();
    println!("    token accuracy {accuracy}");
    assert_eq!(accuracy, 1.0);
    let b = train(&data, &[], &cfg, &train_cfg, &labels).unwrap();
    assert_eq!(a.params, b.params);
    within(t, Duration::from_secs(120));
}

fn metric_correctness() {
    let gold = vec![strings(&["B-A0", "B-A1", "B-V", "O"])];
    let pred = vec![strings(&["B-A0", "O", "B-V", "B-A1"])];
    let r = score(&gold, &pred, &[vec![1; 4]], &ScoreOptions::default()).unwrap();
    let third = 2.0 / 3.0;
    assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (third, third, third));
    let r = score(&gold, &gold, &[vec![1; 4]], &ScoreOptions::default()).unwrap();
    assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (1.0, 1.0, 1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let k = rng.random_range(2..=15);
        let n = rng.random_range(k..=500);
        let plan = make_folds(n, k, rng.random()).unwrap();
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for f in 0..k {
            for i in plan.fold_members(f) {
                assert!(owner.insert(i, f).is_none());
            }
        }
        assert_eq!(owner.len(), n);
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

fn learnability() {
    let t = Instant::now();
    let corpus = synthetic::corpus(200, 12);
    let samples = generate_samples(&corpus, PredicateMode::AllPredicates, &SampleConfig::default()).unwrap();
    assert_eq!(samples.len(), 200);
    let vocab = synthetic::vocabulary();
    let mut cfg = CrossvalConfig {
        k: 10,
        seed: 42,
        ..CrossvalConfig::default()
    };
    cfg.model.hidden_dim = 32;
    cfg.model.num_heads = 2;
    cfg.model.ff_dim = 64;
    cfg.train.learning_rate = 3e-3;
    cfg.train.epochs = 40;
    cfg.train.batch_size = 8;

    let a = crossval(&samples, &vocab, &cfg).unwrap();
    let first_run = t.elapsed();
    let b = crossval(&samples, &vocab, &cfg).unwrap();
    let table = a.render_table();
    println!("{}", table.lines().map(|l| format!("    {l}")).collect::<Vec<_>>().join("\n"));
    assert_eq!(a, b);
    assert_eq!(table, b.render_table());
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + 10 + 2);
    assert!(lines[11].starts_with("Average\t"));
    assert!(lines[12].starts_with("Variance\t"));
    assert!(a.f1.variance >= 0.0 && a.recall.variance >= 0.0 && a.precision.variance >= 0.0);
    assert!(a.f1.mean >= 0.95, "mean F1 {}", a.f1.mean);
    assert!(first_run < Duration::from_secs(600), "took {first_run:?}");
}

#[test]
fn acceptance_suite() {
    let criteria: [(&str, fn()); 12] = [
        ("corpus round trip", corpus_round_trip),
        ("cleaner rule suite", cleaner_rules),
        ("sample explosion", sample_explosion),
        ("wordpiece oracle", wordpiece_oracle),
        ("alignment invariants", alignment_invariants),
        ("encoding invariants", encoding_invariants),
        ("softmax normalisation", softmax_normalisation),
        ("gradient check", gradient_check),
        ("adamw decoupling", adamw_decoupling),
        ("overfit sanity", overfit),
        ("metric correctness", metric_correctness),
        ("end-to-end learnability", learnability),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        println!(
            "{} [{:>2}] {name} ({:.2?})",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
