use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("decode error in {path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("extraction error: {0}")]
    Extract(String),

    #[error("sampling error: {0}")]
    Sample(String),

    #[error("pooling error: {0}")]
    Pooling(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: non-finite loss (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dim {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("compatibility error: {0}")]
    Compat(String),

    /// Wraps a stage failure with the pipeline stage name, e.g. `sample: ...`.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
