//! Semantic role labeling from raw words and role labels alone.
//!
//! Pipeline: [`corpus_io`] reads a dependency SRL corpus, [`cleaner`] repairs
//! or drops defective sentences, [`sample_gen`] emits one sample per
//! predicate, [`wordpiece`] splits words into sub-word pieces with aligned
//! labels, [`encoder`] builds fixed-length numeric inputs, [`model`] trains a
//! transformer token classifier, and [`evaluation`] scores it under k-fold
//! cross-validation.

pub mod cleaner;
pub mod corpus_io;
pub mod encoder;
pub mod evaluation;
pub mod model;
pub mod sample_gen;
pub mod synthetic;
pub mod wordpiece;

pub use cleaner::{clean_corpus, CleaningReport};
pub use corpus_io::{parse_corpus, serialize_corpus, ColumnLayout, Corpus, Sentence, TokenRecord};
pub use encoder::{encode_sample, EncodedSample, LabelMap};
pub use evaluation::{crossval, make_folds, score, CrossvalConfig, CrossvalReport, MetricReport};
pub use model::{ModelConfig, ModelParams, TrainConfig};
pub use sample_gen::{generate_samples, PredicateMode, SrlSample};
pub use wordpiece::{tokenize_with_labels, tokenize_word, AlignedTokenization, Vocabulary};
