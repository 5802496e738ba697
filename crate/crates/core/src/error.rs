//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, training, evaluation and data
/// handling. Variants carry enough context to act on (shapes, ids, line
/// numbers) without needing a backtrace.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes, e.g. a matmul inner-dimension mismatch.
    #[error("shape mismatch in {op}: left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A row/vocabulary index outside the table it points into.
    #[error("index {id} out of range for table of {size} rows")]
    IndexOutOfRange { id: usize, size: usize },

    /// A numeric hyperparameter outside its legal range.
    #[error("invalid parameter {name}: {value} ({requirement})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// A class label other than 0 or 1.
    #[error("label {0} outside {{0, 1}}")]
    InvalidLabel(u8),

    /// Backward pass requested from a non-scalar tensor.
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    /// A token sequence that is empty or does not fit the encoder.
    #[error("sequence length {len} outside [1, {max_len}]")]
    BadSequenceLength { len: usize, max_len: usize },

    /// A pattern template that does not fit the encoder, naming the example.
    #[error("template for {pair_id} is {len} tokens, over the limit of {max_len}")]
    TemplateTooLong {
        pair_id: String,
        len: usize,
        max_len: usize,
    },

    /// An invalid training or model configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step} (loss {loss}, lr {lr})")]
    Diverged { step: usize, loss: f64, lr: f64 },

    /// A malformed dataset line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A dataset split with no examples.
    #[error("empty dataset split: {0}")]
    EmptySplit(String),

    /// A premise or hypothesis that tokenized to nothing.
    #[error("{field} of {pair_id} tokenized to an empty sequence")]
    EmptyText {
        pair_id: String,
        field: &'static str,
    },

    /// A placeholder whose type tag has no name pool.
    #[error("unknown placeholder type tag '{0}'")]
    UnknownTypeTag(String),

    /// The toy-data generator cannot satisfy its constraints.
    #[error("dataset generation failed: {0}")]
    Generation(String),

    /// A metric that needs at least one positive example.
    #[error("metric requires at least one positive example")]
    NoPositives,

    /// A score that is NaN or infinite.
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),

    /// Threshold tuning on a single-class development set.
    #[error("threshold tuning requires both classes, got {0}")]
    DegenerateTuning(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a name pool or rule table.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
