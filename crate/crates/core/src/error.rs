//! Error type shared by every pipeline stage.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },

    #[error("lexicon contains no terms")]
    EmptyLexicon,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate id {id:?} on lines {first_line} and {line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        line: usize,
    },

    #[error("unknown company id {id:?}")]
    UnknownCompany { id: String },

    #[error("degenerate normalization: {what} are all equal")]
    DegenerateNormalization { what: &'static str },

    #[error("corpus contains no documents")]
    EmptyCorpus,

    #[error("corpus contains no tokens")]
    ZeroTokenCorpus,

    #[error("{what} index {index} out of range (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("company {id:?} has no mentioning articles")]
    ZeroMentions { id: String },

    #[error("rankings share no companies")]
    DisjointRankings,

    #[error("too few common companies for rank statistics: {got} < {need}")]
    TooFewCommon { got: usize, need: usize },

    #[error("{folds} folds exceed {items} labeled companies")]
    FoldTooLarge { folds: usize, items: usize },

    #[error("vocabulary of {vocab} terms too small for {topics} topics x {per_topic} keywords")]
    VocabTooSmall {
        vocab: usize,
        topics: usize,
        per_topic: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed artifact {path}: {msg}")]
    Artifact { path: String, msg: String },

    #[error("{stage}: missing required input {path} (run the upstream stage first)")]
    MissingArtifact { stage: &'static str, path: String },

    #[error(
        "artifact {path} was produced under config hash {stored}, current hash is {current} \
         (pass --force to use it anyway)"
    )]
    ConfigHashMismatch {
        path: String,
        stored: String,
        current: String,
    },

    #[error("workdir is locked by {path} (remove the file if no other command is running)")]
    WorkdirLocked { path: String },

    #[error("{0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
