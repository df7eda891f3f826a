use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("loss must be a scalar tensor, got shape {0}")]
    NonScalarLoss(Shape),

    #[error("unsupported scale factor {0} (expected 2, 3 or 4)")]
    UnsupportedScale(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("unsupported bit depth in {path}: {detail}")]
    UnsupportedDepth { path: PathBuf, detail: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite loss at iteration {iter} (lr {lr:e}, loss {loss})")]
    NonFiniteLoss { iter: u64, lr: f64, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
