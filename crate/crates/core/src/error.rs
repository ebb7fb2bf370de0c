use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: {dim} mismatch (expected {expected}, found {found})")]
    Shape {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{op}: {what} ({value}) is not divisible by {divisor}")]
    NotDivisible {
        op: &'static str,
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("scale x{0} is not supported by this network")]
    UnsupportedScale(u32),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("cost mismatch: {0}")]
    CostMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    ) -> Self {
        Error::Shape {
            op,
            dim,
            expected,
            found,
        }
    }
}
