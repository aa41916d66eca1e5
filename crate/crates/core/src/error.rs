use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput([usize; 2]),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("empty sequence cannot be encoded")]
    EmptySequence,
    #[error("span {start}..={end} out of bounds for sequence of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("composition `{method}` needs exactly 2 inputs, got {got}; use a recurrent method (gru, lstm) for other path lengths")]
    CompositionArity { method: &'static str, got: usize },
    #[error("embedding line {line}: expected {expected} values, found {found}")]
    EmbeddingDim {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding line {line}: {message}")]
    EmbeddingParse { line: usize, message: String },
    #[error("index cannot be built from an empty corpus")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no instance in the dataset has an extractable path")]
    NothingToTrain,
}

pub type Result<T> = core::result::Result<T, Error>;
