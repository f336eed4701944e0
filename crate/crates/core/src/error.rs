//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    #[error("cannot read image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("duplicate image id: {id}")]
    DuplicateImageId { id: String },

    #[error("split leakage: {0}")]
    Leakage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error(
        "pretrained ImageNet weights for {arch} not found at {path}; export them with \
         `python scripts/export_imagenet_weights.py --arch {arch} --out <weights-dir>` \
         (needs torch + torchvision with download access) and pass that directory via \
         --weights-dir or the `weights_dir` config key"
    )]
    WeightsUnavailable { arch: String, path: PathBuf },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training error: {0}")]
    Train(String),

    #[error(transparent)]
    Candle(#[from] candle_core::Error),
}

impl Error {
    /// Open a file-context I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (missing paths, malformed
    /// files, out-of-range values) as opposed to runtime failures. The CLI
    /// maps input errors to exit code 2 and everything else to 3.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::MissingFile { .. }
                | Error::Image { .. }
                | Error::InvalidInput(_)
                | Error::Manifest(_)
                | Error::DuplicateImageId { .. }
                | Error::Leakage(_)
                | Error::Config(_)
                | Error::WeightsUnavailable { .. }
                | Error::CheckpointMismatch(_)
                | Error::EmptyDataset(_)
        )
    }
}
