use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use srl_core::cleaner::CleanerConfig;
use srl_core::evaluation::{CrossvalConfig, ScoreOptions};
use srl_core::model::{ModelConfig, TrainConfig};
use srl_core::sample_gen::{PredicateMode, SampleConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Canonical,
    DoublePos,
}

/// Architecture knobs; vocabulary size, label count and sequence length come
/// from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            num_layers: d.num_layers,
            hidden_dim: d.hidden_dim,
            num_heads: d.num_heads,
            ff_dim: d.ff_dim,
            dropout_rate: d.dropout_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            weight_decay: d.weight_decay,
            adam_beta1: d.adam_beta1,
            adam_beta2: d.adam_beta2,
            adam_epsilon: d.adam_epsilon,
        }
    }
}

/// Everything a run depends on. Loaded from TOML, then overridden by flags;
/// the resolved value is written into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub predicates: PredicateMode,
    pub layout: Layout,
    pub verb_tags: BTreeSet<String>,
    pub punctuation_tags: BTreeSet<String>,
    pub include_predicate_labels: bool,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            k: 10,
            predicates: PredicateMode::AllPredicates,
            layout: Layout::Canonical,
            verb_tags: SampleConfig::default().verb_tags,
            punctuation_tags: CleanerConfig::default().punctuation_tags,
            include_predicate_labels: ScoreOptions::default().include_predicate_labels,
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }
}

/// Flags that override the configuration file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(o: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg = match &o.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.k {
            cfg.k = v;
        }
        if let Some(v) = o.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = o.lr {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = o.batch_size {
            cfg.train.batch_size = v;
        }
        Ok(cfg)
    }

    pub fn model_config(&self, vocab_size: usize, num_labels: usize, max_len: usize) -> ModelConfig {
        ModelConfig {
            num_layers: self.model.num_layers,
            hidden_dim: self.model.hidden_dim,
            num_heads: self.model.num_heads,
            ff_dim: self.model.ff_dim,
            vocab_size,
            num_labels,
            max_len,
            dropout_rate: self.model.dropout_rate,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_epsilon: t.adam_epsilon,
            seed: self.seed,
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            include_predicate_labels: self.include_predicate_labels,
        }
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            verb_tags: self.verb_tags.clone(),
        }
    }

    pub fn cleaner_config(&self) -> CleanerConfig {
        CleanerConfig {
            punctuation_tags: self.punctuation_tags.clone(),
        }
    }

    pub fn crossval_config(&self) -> CrossvalConfig {
        CrossvalConfig {
            k: self.k,
            seed: self.seed,
            model: self.model_config(1, 1, 1),
            train: self.train_config(),
            score: self.score_options(),
        }
    }
}
