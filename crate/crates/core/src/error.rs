use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing corpus entry: {0}")]
    MissingEntry(String),
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    AudioFormat(String),
    #[error("checkpoint does not match the model configuration: {0}")]
    CheckpointMismatch(String),
    #[error("stream session already finalized")]
    Finalized,
    #[error(transparent)]
    Nn(#[from] melclean_nn::NnError),
    #[error("WAV error")]
    Wav(#[from] hound::Error),
    #[error("I/O error")]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
