//! Transformer encoder token classifier trained from scratch in double
//! precision, with hand-written backpropagation and AdamW.

mod adamw;
mod checkpoint;
mod network;
mod params;
mod train;

pub use adamw::{adamw_step, adamw_update, OptimizerState};
pub use checkpoint::{load_params, read_checkpoint, save_params, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{
    argmax, backward, decode_logits, forward, loss, loss_and_gradients, predict, softmax_rows,
    Dropout, ForwardOutput, LAYER_NORM_EPS,
};
pub use params::{init_params, LayerParams, ModelParams};
pub use train::{evaluate_encoded, token_accuracy, train, EpochLog, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub num_labels: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 2,
            hidden_dim: 64,
            num_heads: 4,
            ff_dim: 256,
            vocab_size: 1,
            num_labels: 1,
            max_len: 1,
            dropout_rate: 0.1,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("ff_dim", self.ff_dim),
            ("vocab_size", self.vocab_size),
            ("num_labels", self.num_labels),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::Config(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        let h = self.hidden_dim;
        let f = self.ff_dim;
        let per_layer = 4 * (h * h + h) + (h * f + f) + (f * h + h) + 4 * h;
        self.vocab_size * h
            + self.max_len * h
            + 2 * h
            + self.num_layers * per_layer
            + h * self.num_labels
            + self.num_labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("no training data")]
    EmptyTrainingSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
