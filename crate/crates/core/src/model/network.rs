//! Forward pass, loss and analytic gradients.
//!
//! Each layer is post-norm: `h = LN(x + Drop(MHA(x)))`, `y = LN(h + Drop(FFN(h)))`
//! with a tanh-approximated GELU in the feed-forward block. Attention weights
//! are computed over attended key positions only, so padding never reaches a
//! real position.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::params::{LayerParams, ModelParams};
use super::ModelError;
use crate::encoder::{EncodedSample, LabelMap};

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;

/// Dropout stream used during training.
pub enum Dropout<'a, R: Rng> {
    Off,
    On { rate: f64, rng: &'a mut R },
}

impl<R: Rng> Dropout<'_, R> {
    fn mask(&mut self, rows: usize, cols: usize) -> Option<Array2<f64>> {
        match self {
            Dropout::Off => None,
            Dropout::On { rate, .. } if *rate == 0.0 => None,
            Dropout::On { rate, rng } => {
                let keep = 1.0 - *rate;
                Some(Array2::from_shape_fn((rows, cols), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                }))
            }
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= *s;
    }
    let mut y = &xhat * gamma;
    y += beta;
    (y, NormCache { xhat, inv_std })
}

/// Returns the input gradient; accumulates scale/shift gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: &Array1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let n = dy.ncols() as f64;
    let dxhat = dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        let k = cache.inv_std[i] / n;
        Zip::from(dx.row_mut(i))
            .and(&g)
            .and(&xh)
            .for_each(|d, &gi, &xi| *d = k * (n * gi - sum_g - xi * sum_gx));
    }
    dx
}

/// Row-wise softmax restricted to columns where `valid` is true; other
/// columns get probability 0.
fn masked_softmax(scores: &Array2<f64>, valid: &[bool]) -> Array2<f64> {
    let mut out = Array2::zeros(scores.raw_dim());
    for (row, mut orow) in scores.rows().into_iter().zip(out.rows_mut()) {
        let max = row
            .iter()
            .zip(valid)
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for ((o, &v), &ok) in orow.iter_mut().zip(row.iter()).zip(valid) {
            if ok {
                *o = (v - max).exp();
                sum += *o;
            }
        }
        orow /= sum;
    }
    out
}

/// Numerically stable softmax of each row.
pub fn softmax_rows(logits: &ArrayView2<f64>) -> Array2<f64> {
    let valid = vec![true; logits.ncols()];
    masked_softmax(&logits.to_owned(), &valid)
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    norm1: NormCache,
    hidden: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    drop_ff: Option<Array2<f64>>,
    norm2: NormCache,
}

struct SequenceCache {
    layers: Vec<LayerCache>,
    output: Array2<f64>,
    logits: Array2<f64>,
}

fn check_sample(params: &ModelParams, s: &EncodedSample, len: usize) -> Result<(), ModelError> {
    let cfg = &params.config;
    if s.token_ids.len() != len
        || s.label_ids.len() != len
        || s.pred_indicator.len() != len
        || s.attention_mask.len() != len
    {
        return Err(ModelError::Shape("batch sequences differ in length".into()));
    }
    if len > cfg.max_len {
        return Err(ModelError::Shape(format!(
            "sequence length {len} exceeds model max_len {}",
            cfg.max_len
        )));
    }
    if let Some(&t) = s.token_ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::Shape(format!(
            "token id {t} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    if s.pred_indicator.iter().any(|&p| p > 1) {
        return Err(ModelError::Shape("predicate indicator must be 0 or 1".into()));
    }
    if !s.attention_mask.contains(&1) {
        return Err(ModelError::Shape("sequence has no attended position".into()));
    }
    Ok(())
}

fn embed(params: &ModelParams, s: &EncodedSample) -> Array2<f64> {
    let len = s.token_ids.len();
    let mut x = Array2::zeros((len, params.config.hidden_dim));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &params.token_embedding.row(s.token_ids[i] as usize);
        row += &params.position_embedding.row(i);
        row += &params.indicator_embedding.row(s.pred_indicator[i] as usize);
    }
    x
}

fn layer_forward<R: Rng>(
    layer: &LayerParams,
    x: Array2<f64>,
    valid: &[bool],
    heads: usize,
    dropout: &mut Dropout<'_, R>,
) -> (Array2<f64>, LayerCache) {
    let (n, h) = x.dim();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let xv = x.view();
    let q = affine(&xv, &layer.wq, &layer.bq);
    let k = affine(&xv, &layer.wk, &layer.bk);
    let v = affine(&xv, &layer.wv, &layer.bv);

    let mut context = Array2::zeros((n, h));
    let mut probs = Vec::with_capacity(heads);
    for head in 0..heads {
        let cols = s![.., head * d..(head + 1) * d];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let p = masked_softmax(&scores, valid);
        context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }

    let mut attn_out = affine(&context.view(), &layer.wo, &layer.bo);
    let drop_attn = dropout.mask(n, h);
    if let Some(m) = &drop_attn {
        attn_out *= m;
    }
    let (hidden, norm1) = layer_norm(&(&x + &attn_out), &layer.ln1_gamma, &layer.ln1_beta);

    let ff_pre = affine(&hidden.view(), &layer.w1, &layer.b1);
    let ff_act = ff_pre.mapv(gelu);
    let mut ff_out = affine(&ff_act.view(), &layer.w2, &layer.b2);
    let drop_ff = dropout.mask(n, h);
    if let Some(m) = &drop_ff {
        ff_out *= m;
    }
    let (out, norm2) = layer_norm(&(&hidden + &ff_out), &layer.ln2_gamma, &layer.ln2_beta);

    let cache = LayerCache {
        input: x,
        q,
        k,
        v,
        probs,
        context,
        drop_attn,
        norm1,
        hidden,
        ff_pre,
        ff_act,
        drop_ff,
        norm2,
    };
    (out, cache)
}

fn accumulate_affine(
    input: &Array2<f64>,
    dy: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dw += &input.t().dot(dy);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn layer_backward(
    layer: &LayerParams,
    grads: &mut LayerParams,
    cache: &LayerCache,
    dout: &Array2<f64>,
    heads: usize,
) -> Array2<f64> {
    let h = dout.ncols();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();

    let dres2 = layer_norm_backward(
        dout,
        &cache.norm2,
        &layer.ln2_gamma,
        &mut grads.ln2_gamma,
        &mut grads.ln2_beta,
    );
    let mut dhidden = dres2.clone();
    let mut dff_out = dres2;
    if let Some(m) = &cache.drop_ff {
        dff_out *= m;
    }
    let dff_act = accumulate_affine(&cache.ff_act, &dff_out, &layer.w2, &mut grads.w2, &mut grads.b2);
    let mut dff_pre = dff_act;
    Zip::from(&mut dff_pre)
        .and(&cache.ff_pre)
        .for_each(|g, &x| *g *= gelu_grad(x));
    dhidden += &accumulate_affine(&cache.hidden, &dff_pre, &layer.w1, &mut grads.w1, &mut grads.b1);

    let dres1 = layer_norm_backward(
        &dhidden,
        &cache.norm1,
        &layer.ln1_gamma,
        &mut grads.ln1_gamma,
        &mut grads.ln1_beta,
    );
    let mut dx = dres1.clone();
    let mut dattn_out = dres1;
    if let Some(m) = &cache.drop_attn {
        dattn_out *= m;
    }
    let dcontext = accumulate_affine(&cache.context, &dattn_out, &layer.wo, &mut grads.wo, &mut grads.bo);

    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (head, p) in cache.probs.iter().enumerate() {
        let cols = s![.., head * d..(head + 1) * d];
        let dctx = dcontext.slice(cols);
        let dp = dctx.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dctx));
        let mut dscores = Array2::zeros(p.raw_dim());
        for ((mut ds, pr), dpr) in dscores.rows_mut().into_iter().zip(p.rows()).zip(dp.rows()) {
            let dot = pr.dot(&dpr);
            Zip::from(&mut ds)
                .and(&pr)
                .and(&dpr)
                .for_each(|o, &pi, &gi| *o = pi * (gi - dot) * scale);
        }
        dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
    }
    dx += &accumulate_affine(&cache.input, &dq, &layer.wq, &mut grads.wq, &mut grads.bq);
    dx += &accumulate_affine(&cache.input, &dk, &layer.wk, &mut grads.wk, &mut grads.bk);
    dx += &accumulate_affine(&cache.input, &dv, &layer.wv, &mut grads.wv, &mut grads.bv);
    dx
}

fn sequence_forward<R: Rng>(
    params: &ModelParams,
    s: &EncodedSample,
    dropout: &mut Dropout<'_, R>,
) -> SequenceCache {
    let valid: Vec<bool> = s.attention_mask.iter().map(|&m| m == 1).collect();
    let mut x = embed(params, s);
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (y, cache) = layer_forward(layer, x, &valid, params.config.num_heads, dropout);
        layers.push(cache);
        x = y;
    }
    let logits = affine(&x.view(), &params.head_weights, &params.head_bias);
    SequenceCache {
        layers,
        output: x,
        logits,
    }
}

/// Logits for a batch, shape `batch x L x num_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Array3<f64>,
}

impl ForwardOutput {
    pub fn probabilities(&self) -> Array3<f64> {
        let mut p = self.logits.clone();
        for mut seq in p.outer_iter_mut() {
            let sm = softmax_rows(&seq.view());
            seq.assign(&sm);
        }
        p
    }
}

fn batch_len(params: &ModelParams, batch: &[EncodedSample]) -> Result<usize, ModelError> {
    let len = batch
        .first()
        .map(|s| s.token_ids.len())
        .ok_or_else(|| ModelError::Shape("empty batch".into()))?;
    for s in batch {
        check_sample(params, s, len)?;
    }
    Ok(len)
}

/// Evaluation-mode forward pass (no dropout).
pub fn forward(params: &ModelParams, batch: &[EncodedSample]) -> Result<ForwardOutput, ModelError> {
    let len = batch_len(params, batch)?;
    let mut logits = Array3::zeros((batch.len(), len, params.config.num_labels));
    let mut off = Dropout::<rand_chacha::ChaCha8Rng>::Off;
    for (s, mut out) in batch.iter().zip(logits.outer_iter_mut()) {
        out.assign(&sequence_forward(params, s, &mut off).logits);
    }
    Ok(ForwardOutput { logits })
}

fn log_softmax_at(row: ArrayView1<f64>, target: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    row[target] - lse
}

/// Mean cross-entropy over attended positions of the whole batch.
pub fn loss(logits: &Array3<f64>, batch: &[EncodedSample]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, seq) in batch.iter().zip(logits.outer_iter()) {
        for (i, row) in seq.rows().into_iter().enumerate() {
            if s.attention_mask[i] != 1 {
                continue;
            }
            let target = s.label_ids[i] as usize;
            if target >= row.len() {
                return Err(ModelError::Shape(format!(
                    "label id {target} outside {} labels",
                    row.len()
                )));
            }
            total -= log_softmax_at(row, target);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Loss and gradients for one batch. With [`Dropout::On`] this is a training
/// step's pass; with [`Dropout::Off`] it is deterministic.
pub fn loss_and_gradients<R: Rng>(
    params: &ModelParams,
    batch: &[EncodedSample],
    dropout: &mut Dropout<'_, R>,
) -> Result<(f64, ModelParams), ModelError> {
    batch_len(params, batch)?;
    let num_labels = params.config.num_labels;
    let count: usize = batch
        .iter()
        .map(|s| s.attention_mask.iter().filter(|&&m| m == 1).count())
        .sum();
    let norm = 1.0 / count as f64;
    let mut grads = ModelParams::zeros(&params.config);
    let mut total = 0.0;

    for s in batch {
        let cache = sequence_forward(params, s, dropout);
        let mut dlogits = Array2::zeros(cache.logits.raw_dim());
        for (i, (row, mut drow)) in cache
            .logits
            .rows()
            .into_iter()
            .zip(dlogits.rows_mut())
            .enumerate()
        {
            if s.attention_mask[i] != 1 {
                continue;
            }
            let target = s.label_ids[i] as usize;
            if target >= num_labels {
                return Err(ModelError::Shape(format!(
                    "label id {target} outside {num_labels} labels"
                )));
            }
            total -= log_softmax_at(row, target);
            let p = softmax_rows(&row.insert_axis(Axis(0)));
            drow.assign(&p.row(0));
            drow[target] -= 1.0;
            drow *= norm;
        }

        let mut dx = accumulate_affine(
            &cache.output,
            &dlogits,
            &params.head_weights,
            &mut grads.head_weights,
            &mut grads.head_bias,
        );
        for (li, lc) in cache.layers.iter().enumerate().rev() {
            dx = layer_backward(&params.layers[li], &mut grads.layers[li], lc, &dx, params.config.num_heads);
        }
        for (i, row) in dx.rows().into_iter().enumerate() {
            let mut t = grads.token_embedding.row_mut(s.token_ids[i] as usize);
            t += &row;
            let mut p = grads.position_embedding.row_mut(i);
            p += &row;
            let mut ind = grads.indicator_embedding.row_mut(s.pred_indicator[i] as usize);
            ind += &row;
        }
    }
    Ok((total * norm, grads))
}

/// Gradients of the mean loss in evaluation mode.
pub fn backward(params: &ModelParams, batch: &[EncodedSample]) -> Result<ModelParams, ModelError> {
    let mut off = Dropout::<rand_chacha::ChaCha8Rng>::Off;
    loss_and_gradients(params, batch, &mut off).map(|(_, g)| g)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Label texts for the attended positions of one sequence's logits.
pub fn decode_logits(logits: &ArrayView2<f64>, true_length: usize, labels: &LabelMap) -> Vec<String> {
    logits
        .rows()
        .into_iter()
        .take(true_length)
        .map(|row| {
            let id = argmax(row) as u32;
            labels
                .label(id)
                .map(str::to_string)
                .unwrap_or_else(|| format!("#{id}"))
        })
        .collect()
}

pub fn predict(
    params: &ModelParams,
    encoded: &EncodedSample,
    labels: &LabelMap,
) -> Result<Vec<String>, ModelError> {
    let out = forward(params, std::slice::from_ref(encoded))?;
    Ok(decode_logits(
        &out.logits.index_axis(Axis(0), 0),
        encoded.true_length,
        labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn masked_softmax_ignores_invalid_columns() {
        let p = masked_softmax(&array![[1.0, 2.0, 100.0]], &[true, true, false]);
        assert_eq!(p[[0, 2]], 0.0);
        assert!((p[[0, 0]] + p[[0, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
        assert_eq!(argmax(array![0.0, 0.0].view()), 0);
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 5.0, 2.0]];
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
