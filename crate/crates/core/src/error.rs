use thiserror::Error;

/// Errors raised by the routing engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate dialogue id `{0}`")]
    DuplicateDialogue(String),

    #[error("dialogue `{dialogue_id}`: turn id {turn_id} does not increase over {previous}")]
    NonMonotoneTurn {
        dialogue_id: String,
        turn_id: u32,
        previous: u32,
    },

    #[error("invalid slot name `{0}`")]
    InvalidSlot(String),

    #[error("invalid dialogue `{dialogue_id}`: {reason}")]
    InvalidDialogue { dialogue_id: String, reason: String },

    #[error("turn index {index} out of range for dialogue `{dialogue_id}` with {len} turns")]
    TurnOutOfRange {
        dialogue_id: String,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding dimension mismatch at key `{key}`: expected {expected}, got {actual}")]
    StoreDimension {
        key: String,
        expected: usize,
        actual: usize,
    },

    #[error("missing embedding for key `{0}`")]
    MissingEmbedding(String),

    #[error("missing prediction from expert `{expert}` for turn `{key}`")]
    MissingPrediction { expert: String, key: String },

    #[error("missing confidence from expert `{expert}` for turn `{key}`")]
    MissingConfidence { expert: String, key: String },

    #[error("unknown expert `{0}`")]
    UnknownExpert(String),

    #[error("no pairs to train on")]
    NoPairs,

    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },

    #[error("all expert pools are empty")]
    EmptyPools,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("run does not cover the gold corpus: {0}")]
    Coverage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expert `{expert}` failed on dialogue `{dialogue_id}` turn {turn_id}: {source}")]
    ExpertFailure {
        expert: String,
        dialogue_id: String,
        turn_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
