use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{adamw_step, OptimizerState};
use super::network::{argmax, decode_logits, forward, loss, loss_and_gradients, Dropout};
use super::params::{init_params, ModelParams};
use super::{ModelConfig, ModelError, TrainConfig};
use crate::encoder::{EncodedSample, LabelMap};
use crate::evaluation::{score, MetricReport, ScoreOptions};

/// Offset separating the dropout stream from the shuffle stream.
const DROPOUT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Fraction of attended positions whose argmax equals the gold label id.
pub fn token_accuracy(params: &ModelParams, data: &[EncodedSample]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let out = forward(params, data)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (s, seq) in data.iter().zip(out.logits.outer_iter()) {
        for i in 0..s.true_length {
            total += 1;
            if argmax(seq.row(i)) as u32 == s.label_ids[i] {
                hit += 1;
            }
        }
    }
    Ok(hit as f64 / total as f64)
}

/// Loss and head-position metrics on held-out data.
pub fn evaluate_encoded(
    params: &ModelParams,
    data: &[EncodedSample],
    labels: &LabelMap,
    options: &ScoreOptions,
) -> Result<(f64, MetricReport), ModelError> {
    let out = forward(params, data)?;
    let l = loss(&out.logits, data)?;
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    let mut heads = Vec::with_capacity(data.len());
    for (s, seq) in data.iter().zip(out.logits.outer_iter()) {
        pred.push(decode_logits(&seq, s.true_length, labels));
        gold.push(
            s.label_ids[..s.true_length]
                .iter()
                .map(|&id| labels.label(id).unwrap_or("[UNK]").to_string())
                .collect(),
        );
        heads.push(s.head_mask(labels)[..s.true_length].to_vec());
    }
    let report = score(&gold, &pred, &heads, options)
        .map_err(|e| ModelError::Shape(e.to_string()))?;
    Ok((l, report))
}

/// Mini-batch AdamW training from random initialisation at a fixed learning
/// rate. Keeps the parameters of the epoch with the best validation micro F1
/// (the earliest on ties), or the last epoch when `val` is empty.
pub fn train(
    train_data: &[EncodedSample],
    val: &[EncodedSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    labels: &LabelMap,
) -> Result<TrainOutcome, ModelError> {
    model_cfg.validate()?;
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut params = init_params(model_cfg);
    let mut state = OptimizerState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let options = ScoreOptions::default();

    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<EncodedSample> = chunk.iter().map(|&i| train_data[i].clone()).collect();
            let mut dropout = Dropout::On {
                rate: model_cfg.dropout_rate,
                rng: &mut dropout_rng,
            };
            let (l, grads) = loss_and_gradients(&params, &batch, &mut dropout)?;
            if !l.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    batch: bi,
                    loss: l,
                });
            }
            adamw_step(&mut params, &grads, &mut state, cfg);
            loss_sum += l;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;

        let (val_loss, val_f1) = if val.is_empty() {
            (None, None)
        } else {
            let (l, report) = evaluate_encoded(&params, val, labels, &options)?;
            if !l.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    batch: batches,
                    loss: l,
                });
            }
            (Some(l), Some(report.micro_f1))
        };
        log::info!(
            "epoch {epoch}: train_loss={train_loss:.6} val_loss={val_loss:?} val_f1={val_f1:?}"
        );
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_f1,
        });
        if let Some(f1) = val_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, params.clone()));
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, Some(epoch)),
        None => {
            let last = if cfg.epochs > 0 { Some(cfg.epochs) } else { None };
            (params, last)
        }
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
    })
}
