//! Crate-wide error type.
//!
//! Errors are split into two broad classes that map onto CLI exit codes:
//! configuration / usage problems (exit 1) and data problems found while
//! reading or validating inputs (exit 2).

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

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate doc_id \"{0}\"")]
    DuplicateDocId(String),

    #[error("duplicate query id \"{0}\"")]
    DuplicateQueryId(String),

    #[error("unknown doc_id \"{0}\"")]
    UnknownDocId(String),

    #[error("empty corpus: average document length is undefined")]
    EmptyCorpus,

    #[error("cannot parse a document id from URL \"{0}\"")]
    BadDocUrl(String),

    #[error("query \"{query_id}\": gold snippet document \"{doc_id}\" is not in the gold document list")]
    GoldSnippetOutsideDocs { query_id: String, doc_id: String },

    #[error("{path}:{line}: unknown scorer \"{name}\"")]
    UnknownScorer {
        path: PathBuf,
        line: usize,
        name: String,
    },

    #[error("{path}:{line}: score {value} for scorer {scorer} outside [{lo}, {hi}]")]
    ScoreOutOfRange {
        path: PathBuf,
        line: usize,
        scorer: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("missing {scorer} score for query {query_id}, doc {doc_id}, sentence {sent_index}")]
    MissingScore {
        query_id: String,
        doc_id: String,
        sent_index: u32,
        scorer: String,
    },

    #[error("duplicate item {0} in a ranked list")]
    DuplicateRanked(String),

    #[error("no gold judgments for queries: {}", .0.join(", "))]
    MissingGold(Vec<String>),

    #[error("cannot aggregate an empty set of per-query results")]
    EmptyEvaluation,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid search supports at most {max} free dimensions, got {got}")]
    GridTooLarge { got: usize, max: usize },

    #[error("submission failed validation: {0}")]
    InvalidSubmission(String),
}

impl Error {
    /// Exit code for the CLI: 1 for usage/config errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::InvalidWeights(_)
            | Error::InvalidConfig(_)
            | Error::GridTooLarge { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
