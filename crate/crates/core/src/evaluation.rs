//! Head-position precision/recall/F1 and k-fold cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{compute_max_len, encode_with, EncodeError, EncodedSample, LabelMap, UnknownLabels};
use crate::model::{decode_logits, forward, train, ModelConfig, ModelError, TrainConfig};
use crate::sample_gen::{is_predicate_label, SrlSample, OUTSIDE};
use crate::wordpiece::{tokenize_with_labels, AlignedTokenization, Vocabulary, CONTINUATION_LABEL, PAD};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sequence {index}: {what} lengths differ ({left} vs {right})")]
    LengthMismatch {
        index: usize,
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("{0} sequence lists differ in length")]
    BatchMismatch(&'static str),
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("{n} samples cannot fill {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("fold {fold} failed: {source}")]
    FoldFailed {
        fold: usize,
        #[source]
        source: ModelError,
        partial: Box<CrossvalReport>,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Count `B-V`/`B-NVE` predicate-position labels as roles.
    pub include_predicate_labels: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            include_predicate_labels: true,
        }
    }
}

impl ScoreOptions {
    pub fn is_role(&self, label: &str) -> bool {
        !(label == OUTSIDE
            || label == CONTINUATION_LABEL
            || label == PAD
            || (!self.include_predicate_labels && is_predicate_label(label)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label: BTreeMap<String, LabelScore>,
    pub evaluated_positions: usize,
    pub gold_roles: usize,
    pub predicted_roles: usize,
    pub correct_roles: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from counts: `2 tp / (predicted + gold)`.
fn f1_from_counts(tp: usize, predicted: usize, gold: usize) -> f64 {
    ratio(2 * tp, predicted + gold)
}

#[derive(Default)]
struct Counts {
    tp: usize,
    predicted: usize,
    gold: usize,
}

/// Scores aligned label sequences at positions where `head_masks` is 1.
pub fn score(
    gold: &[Vec<String>],
    predicted: &[Vec<String>],
    head_masks: &[Vec<u8>],
    options: &ScoreOptions,
) -> Result<MetricReport, EvalError> {
    if gold.len() != predicted.len() || gold.len() != head_masks.len() {
        return Err(EvalError::BatchMismatch("gold/predicted/mask"));
    }
    let mut per: BTreeMap<&str, Counts> = BTreeMap::new();
    let mut total = Counts::default();
    let mut positions = 0;
    for (index, ((g, p), m)) in gold.iter().zip(predicted).zip(head_masks).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::LengthMismatch {
                index,
                what: "gold/predicted",
                left: g.len(),
                right: p.len(),
            });
        }
        if g.len() != m.len() {
            return Err(EvalError::LengthMismatch {
                index,
                what: "gold/mask",
                left: g.len(),
                right: m.len(),
            });
        }
        for ((gl, pl), &h) in g.iter().zip(p).zip(m) {
            if h != 1 {
                continue;
            }
            positions += 1;
            let gold_role = options.is_role(gl);
            let pred_role = options.is_role(pl);
            if gold_role {
                total.gold += 1;
                per.entry(gl).or_default().gold += 1;
            }
            if pred_role {
                total.predicted += 1;
                per.entry(pl).or_default().predicted += 1;
            }
            if gold_role && gl == pl {
                total.tp += 1;
                per.entry(gl).or_default().tp += 1;
            }
        }
    }
    let per_label: BTreeMap<String, LabelScore> = per
        .iter()
        .map(|(l, c)| {
            (
                l.to_string(),
                LabelScore {
                    precision: ratio(c.tp, c.predicted),
                    recall: ratio(c.tp, c.gold),
                    f1: f1_from_counts(c.tp, c.predicted, c.gold),
                    support: c.gold,
                },
            )
        })
        .collect();
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.values().map(|s| s.f1).sum::<f64>() / per_label.len() as f64
    };
    Ok(MetricReport {
        micro_precision: ratio(total.tp, total.predicted),
        micro_recall: ratio(total.tp, total.gold),
        micro_f1: f1_from_counts(total.tp, total.predicted, total.gold),
        macro_f1,
        per_label,
        evaluated_positions: positions,
        gold_roles: total.gold,
        predicted_roles: total.predicted,
        correct_roles: total.tp,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle followed by round-robin assignment.
pub fn make_folds(n_samples: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    if n_samples < k {
        return Err(EvalError::TooFewSamples { n: n_samples, k });
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n_samples];
    for (rank, &idx) in order.iter().enumerate() {
        assignments[idx] = rank % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

/// Draws, for every test fold, a validation fold uniformly from the others.
pub fn validation_folds(k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_F42D_4C95_7F2D);
    (0..k)
        .map(|t| {
            let r = rng.random_range(0..k - 1);
            if r >= t {
                r + 1
            } else {
                r
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalConfig {
    pub k: usize,
    pub seed: u64,
    /// Architecture template; vocabulary size, label count and max length are
    /// filled in per fold.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub score: ScoreOptions,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        CrossvalConfig {
            k: 10,
            seed: 42,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            score: ScoreOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_fold: usize,
    pub val_fold: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    /// Validation/test samples longer than the training-fold max length.
    /// Skipped test samples are scored as all-outside predictions.
    pub skipped_samples: usize,
    pub best_epoch: Option<usize>,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVariance {
    /// Mean and population variance.
    pub fn of(values: &[f64]) -> MeanVariance {
        if values.is_empty() {
            return MeanVariance::default();
        }
        let n = values.len() as f64;
        // Shifted by the first value so identical inputs give exactly zero.
        let shift = values[0];
        let mean_offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
        let mean = shift + mean_offset;
        let variance = values
            .iter()
            .map(|v| (v - shift - mean_offset) * (v - shift - mean_offset))
            .sum::<f64>()
            / n;
        MeanVariance { mean, variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub k: usize,
    pub seed: u64,
    pub per_permutation: Vec<FoldResult>,
    pub recall: MeanVariance,
    pub precision: MeanVariance,
    pub f1: MeanVariance,
}

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

impl CrossvalReport {
    fn from_folds(k: usize, seed: u64, folds: Vec<FoldResult>) -> CrossvalReport {
        let col = |f: fn(&MetricReport) -> f64| -> Vec<f64> { folds.iter().map(|r| f(&r.metrics)).collect() };
        CrossvalReport {
            k,
            seed,
            recall: MeanVariance::of(&col(|m| m.micro_recall)),
            precision: MeanVariance::of(&col(|m| m.micro_precision)),
            f1: MeanVariance::of(&col(|m| m.micro_f1)),
            per_permutation: folds,
        }
    }

    /// Permutation rows, then Average and Variance rows. Values are
    /// percentages; variances are of the percentage values.
    pub fn render_table(&self) -> String {
        let mut s = String::from("Permutation\tRecall\tPrecision\tF1\n");
        for (i, r) in self.per_permutation.iter().enumerate() {
            let name = ORDINALS
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("#{}", i + 1));
            s.push_str(&format!(
                "{name}\t{:.2}\t{:.2}\t{:.2}\n",
                100.0 * r.metrics.micro_recall,
                100.0 * r.metrics.micro_precision,
                100.0 * r.metrics.micro_f1
            ));
        }
        s.push_str(&format!(
            "Average\t{:.2}\t{:.2}\t{:.2}\n",
            100.0 * self.recall.mean,
            100.0 * self.precision.mean,
            100.0 * self.f1.mean
        ));
        s.push_str(&format!(
            "Variance\t{:.4}\t{:.4}\t{:.4}\n",
            1e4 * self.recall.variance,
            1e4 * self.precision.variance,
            1e4 * self.f1.variance
        ));
        s
    }
}

/// Precision/recall/F1 as a one-row table.
pub fn render_metrics(report: &MetricReport) -> String {
    let mut s = format!(
        "Precision\tRecall\tF1\tMacro-F1\n{:.2}\t{:.2}\t{:.2}\t{:.2}\n\nlabel\tprecision\trecall\tf1\tsupport\n",
        100.0 * report.micro_precision,
        100.0 * report.micro_recall,
        100.0 * report.micro_f1,
        100.0 * report.macro_f1
    );
    for (label, l) in &report.per_label {
        s.push_str(&format!(
            "{label}\t{:.2}\t{:.2}\t{:.2}\t{}\n",
            100.0 * l.precision,
            100.0 * l.recall,
            100.0 * l.f1,
            l.support
        ));
    }
    s
}

/// Encodes samples that fit `max_len`; returns the encodings with their
/// indices and the number skipped for length.
fn encode_fitting(
    indices: &[usize],
    samples: &[SrlSample],
    aligned: &[AlignedTokenization],
    vocab: &Vocabulary,
    labels: &LabelMap,
    max_len: usize,
) -> Result<(Vec<usize>, Vec<EncodedSample>, usize), EncodeError> {
    let mut kept = Vec::new();
    let mut encoded = Vec::new();
    let mut skipped = 0;
    for &i in indices {
        match encode_with(&aligned[i], samples[i].pred_index, vocab, labels, max_len, UnknownLabels::MapToUnk) {
            Ok(e) => {
                kept.push(i);
                encoded.push(e);
            }
            Err(EncodeError::TooLong { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((kept, encoded, skipped))
}

fn run_fold(
    test_fold: usize,
    val_fold: usize,
    plan: &FoldPlan,
    samples: &[SrlSample],
    aligned: &[AlignedTokenization],
    vocab: &Vocabulary,
    cfg: &CrossvalConfig,
) -> Result<FoldResult, EvalError> {
    let train_idx: Vec<usize> = (0..samples.len())
        .filter(|&i| plan.assignments[i] != test_fold && plan.assignments[i] != val_fold)
        .collect();
    let val_idx = plan.fold_members(val_fold);
    let test_idx = plan.fold_members(test_fold);

    let labels = LabelMap::build(train_idx.iter().map(|&i| &samples[i]));
    let max_len = compute_max_len(train_idx.iter().map(|&i| &aligned[i]));
    let train_enc: Vec<EncodedSample> = train_idx
        .iter()
        .map(|&i| encode_with(&aligned[i], samples[i].pred_index, vocab, &labels, max_len, UnknownLabels::Reject))
        .collect::<Result<_, _>>()?;
    let (_, val_enc, val_skipped) = encode_fitting(&val_idx, samples, aligned, vocab, &labels, max_len)?;
    let (test_kept, test_enc, test_skipped) =
        encode_fitting(&test_idx, samples, aligned, vocab, &labels, max_len)?;

    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        num_labels: labels.len(),
        max_len,
        seed: cfg.model.seed.wrapping_add(test_fold as u64),
        ..cfg.model.clone()
    };
    let train_cfg = TrainConfig {
        seed: cfg.train.seed.wrapping_add(test_fold as u64),
        ..cfg.train.clone()
    };
    let outcome = train(&train_enc, &val_enc, &model_cfg, &train_cfg, &labels)?;

    let mut gold = Vec::with_capacity(test_idx.len());
    let mut pred = Vec::with_capacity(test_idx.len());
    let mut heads = Vec::with_capacity(test_idx.len());
    if !test_enc.is_empty() {
        let out = forward(&outcome.params, &test_enc)?;
        for ((&i, e), seq) in test_kept.iter().zip(&test_enc).zip(out.logits.outer_iter()) {
            pred.push(decode_logits(&seq, e.true_length, &labels));
            gold.push(aligned[i].labels.clone());
            heads.push(aligned[i].head_mask.clone());
        }
    }
    // Skipped test samples still count: predicted all-outside, so their gold
    // roles are misses.
    for &i in test_idx.iter().filter(|i| !test_kept.contains(i)) {
        pred.push(vec![OUTSIDE.to_string(); aligned[i].len()]);
        gold.push(aligned[i].labels.clone());
        heads.push(aligned[i].head_mask.clone());
    }
    let metrics = score(&gold, &pred, &heads, &cfg.score)?;
    Ok(FoldResult {
        test_fold,
        val_fold,
        train_samples: train_enc.len(),
        val_samples: val_enc.len(),
        test_samples: test_enc.len(),
        skipped_samples: val_skipped + test_skipped,
        best_epoch: outcome.best_epoch,
        metrics,
    })
}

/// k-fold cross-validation: each fold is the test set once, one other fold
/// (drawn at random) validates, and the remaining k-2 folds train. Label map
/// and max length come from the training folds only. Folds run in parallel;
/// the report is ordered by test fold.
pub fn crossval(
    samples: &[SrlSample],
    vocab: &Vocabulary,
    cfg: &CrossvalConfig,
) -> Result<CrossvalReport, EvalError> {
    let plan = make_folds(samples.len(), cfg.k, cfg.seed)?;
    let val_folds = validation_folds(cfg.k, cfg.seed);
    let aligned: Vec<AlignedTokenization> = samples
        .iter()
        .map(|s| tokenize_with_labels(s, vocab))
        .collect();

    let results: Vec<Result<FoldResult, EvalError>> = (0..cfg.k)
        .into_par_iter()
        .map(|t| run_fold(t, val_folds[t], &plan, samples, &aligned, vocab, cfg))
        .collect();

    let mut done = Vec::with_capacity(cfg.k);
    for (fold, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => done.push(f),
            Err(EvalError::Model(source)) => {
                return Err(EvalError::FoldFailed {
                    fold,
                    source,
                    partial: Box::new(CrossvalReport::from_folds(cfg.k, cfg.seed, done)),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CrossvalReport::from_folds(cfg.k, cfg.seed, done))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let g = vec![v(&["B-A0", "O", "B-V"])];
        let r = score(&g, &g, &[vec![1, 1, 1]], &ScoreOptions::default()).unwrap();
        assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (1.0, 1.0, 1.0));
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn masked_positions_are_ignored() {
        let g = vec![v(&["O", "B-A0", "X", "O"])];
        let p = vec![v(&["B-A1", "B-A0", "B-A2", "B-A3"])];
        let r = score(&g, &p, &[vec![0, 1, 0, 0]], &ScoreOptions::default()).unwrap();
        assert_eq!(r.evaluated_positions, 1);
        assert_eq!(r.micro_f1, 1.0);
    }

    #[test]
    fn predicate_labels_can_be_excluded() {
        let g = vec![v(&["B-V", "B-A0"])];
        let p = vec![v(&["B-V", "O"])];
        let opts = ScoreOptions {
            include_predicate_labels: false,
        };
        let r = score(&g, &p, &[vec![1, 1]], &opts).unwrap();
        assert_eq!(r.gold_roles, 1);
        assert_eq!(r.micro_recall, 0.0);
        assert_eq!(r.micro_precision, 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let err = score(&[v(&["O"])], &[v(&["O", "O"])], &[vec![1]], &ScoreOptions::default());
        assert!(matches!(err, Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn fold_balance_rules() {
        let p = make_folds(10, 10, 3).unwrap();
        assert_eq!(p.fold_sizes(), vec![1; 10]);
        let mut sizes = make_folds(105, 10, 3).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 11, 11, 11, 11, 11]);
        assert!(matches!(make_folds(10, 1, 0), Err(EvalError::TooFewFolds(1))));
        assert!(matches!(make_folds(3, 4, 0), Err(EvalError::TooFewSamples { .. })));
    }

    #[test]
    fn validation_fold_never_equals_test_fold() {
        for seed in 0..50 {
            for (t, &v) in validation_folds(10, seed).iter().enumerate() {
                assert_ne!(t, v);
                assert!(v < 10);
            }
        }
    }

    #[test]
    fn constant_scores_have_zero_variance() {
        let mv = MeanVariance::of(&[0.8; 10]);
        assert_eq!(mv.variance, 0.0);
        assert!((mv.mean - 0.8).abs() < 1e-15);
        let mv = MeanVariance::of(&[1.0, 3.0]);
        assert_eq!((mv.mean, mv.variance), (2.0, 1.0));
    }
}
