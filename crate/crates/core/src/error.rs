use thiserror::Error;

/// Errors raised by the blanket-core operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes of the supplied matrices and vectors disagree.
    #[error("structural error in `{field}`: {detail}")]
    Structural { field: String, detail: String },

    #[error("non-finite value in {quantity} at coordinate {index}")]
    NonFinite { quantity: &'static str, index: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("product Q[{i}][{t}]*H[{t}][{j}] = {value} exceeds the entry bound h = {h}")]
    BoundViolation {
        i: usize,
        t: usize,
        j: usize,
        value: f64,
        h: f64,
    },

    #[error("degenerate {what}: {detail}")]
    Degenerate { what: &'static str, detail: String },

    #[error("zero-probability cell in {0}")]
    Support(String),

    #[error("potential of degree {0} is not supported (maximum 4)")]
    UnsupportedDegree(usize),

    #[error("operation requires a partitioned system (k, l, m)")]
    MissingPartition,

    #[error("trajectory diverged at step {step} (|x| = {norm:e}); try a smaller dt")]
    BlowUp { step: usize, norm: f64 },

    #[error("insufficient samples: {have} states after burn-in, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },

    /// A document failed to parse; `path` locates the offending field.
    #[error("parse error at `{path}`: {detail}")]
    Parse { path: String, detail: String },

    #[error("index out of range: {0}")]
    Index(String),
}

impl Error {
    pub(crate) fn structural(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Structural {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
