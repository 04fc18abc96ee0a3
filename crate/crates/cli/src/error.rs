use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Sample(#[from] srl_core::sample_gen::SampleError),
    #[error(transparent)]
    Vocab(#[from] srl_core::wordpiece::VocabError),
    #[error(transparent)]
    Encode(#[from] srl_core::encoder::EncodeError),
    #[error(transparent)]
    Model(#[from] srl_core::model::ModelError),
    #[error(transparent)]
    Eval(#[from] srl_core::evaluation::EvalError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl Into<String>) -> CliError {
        CliError::Artifact {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}
