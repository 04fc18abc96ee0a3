use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
}

impl LayerParams {
    fn zeros(h: usize, f: usize) -> LayerParams {
        LayerParams {
            wq: Array2::zeros((h, h)),
            bq: Array1::zeros(h),
            wk: Array2::zeros((h, h)),
            bk: Array1::zeros(h),
            wv: Array2::zeros((h, h)),
            bv: Array1::zeros(h),
            wo: Array2::zeros((h, h)),
            bo: Array1::zeros(h),
            ln1_gamma: Array1::zeros(h),
            ln1_beta: Array1::zeros(h),
            w1: Array2::zeros((h, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, h)),
            b2: Array1::zeros(h),
            ln2_gamma: Array1::zeros(h),
            ln2_beta: Array1::zeros(h),
        }
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub indicator_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(wq, bq, wk, bk, wv, bv, wo, bo, ln1_gamma, ln1_beta, w1, b1, w2, b2, ln2_gamma, ln2_beta)
    };
}

impl ModelParams {
    /// All-zero tensors shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> ModelParams {
        let h = config.hidden_dim;
        ModelParams {
            config: config.clone(),
            token_embedding: Array2::zeros((config.vocab_size, h)),
            position_embedding: Array2::zeros((config.max_len, h)),
            indicator_embedding: Array2::zeros((2, h)),
            layers: (0..config.num_layers)
                .map(|_| LayerParams::zeros(h, config.ff_dim))
                .collect(),
            head_weights: Array2::zeros((h, config.num_labels)),
            head_bias: Array1::zeros(config.num_labels),
        }
    }

    /// Named views in canonical order (the checkpoint and optimizer order).
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding.view().into_dyn()),
            ("position_embedding".to_string(), self.position_embedding.view().into_dyn()),
            ("indicator_embedding".to_string(), self.indicator_embedding.view().into_dyn()),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => {
                    $(out.push((format!("layer{i}.{}", stringify!($f)), layer.$f.view().into_dyn()));)*
                };
            }
            layer_fields!(push);
        }
        out.push(("head_weights".to_string(), self.head_weights.view().into_dyn()));
        out.push(("head_bias".to_string(), self.head_bias.view().into_dyn()));
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = vec![
            self.token_embedding.view_mut().into_dyn(),
            self.position_embedding.view_mut().into_dyn(),
            self.indicator_embedding.view_mut().into_dyn(),
        ];
        for layer in self.layers.iter_mut() {
            macro_rules! push {
                ($($f:ident),*) => {
                    $(out.push(layer.$f.view_mut().into_dyn());)*
                };
            }
            layer_fields!(push);
        }
        out.push(self.head_weights.view_mut().into_dyn());
        out.push(self.head_bias.view_mut().into_dyn());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Parameters flattened in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for mut t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().expect("flat parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "flat parameter vector too long");
    }
}

/// Weights and embeddings ~ N(0, 1/hidden_dim); biases zero; layer-norm
/// scales one. Deterministic in `config.seed`.
pub fn init_params(config: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0 / (config.hidden_dim as f64).sqrt())
        .expect("standard deviation is positive");
    let mut fill = |a: &mut Array2<f64>| a.iter_mut().for_each(|v| *v = normal.sample(&mut rng));

    fill(&mut p.token_embedding);
    fill(&mut p.position_embedding);
    fill(&mut p.indicator_embedding);
    for layer in &mut p.layers {
        fill(&mut layer.wq);
        fill(&mut layer.wk);
        fill(&mut layer.wv);
        fill(&mut layer.wo);
        fill(&mut layer.w1);
        fill(&mut layer.w2);
        layer.ln1_gamma.fill(1.0);
        layer.ln2_gamma.fill(1.0);
    }
    fill(&mut p.head_weights);
    p
}
