use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alias {alias:?} is claimed by both {first:?} and {second:?}")]
    LexiconConflict {
        alias: String,
        first: String,
        second: String,
    },

    #[error("unknown relation {0:?} (expected \"profession\" or \"nationality\")")]
    UnknownRelation(String),

    #[error("entity {entity:?} is not canonical in the {relation} lexicon")]
    UnknownEntity { relation: String, entity: String },

    #[error("person {0:?} has no document")]
    PersonNotFound(String),

    #[error("no model was trained for relation {0}")]
    RelationNotModelled(String),

    #[error("coverage is undefined for an empty person manifest")]
    UndefinedCoverage,

    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("kendall tau is undefined: {0}")]
    UndefinedTau(&'static str),

    #[error("metric is undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no token reaches min_count = {0}; the effective vocabulary is empty")]
    EmptyVocabulary(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {} line(s) could not be scored{}", path.display(), lines.len(), list_lines(lines))]
    BadLines {
        path: PathBuf,
        lines: Vec<(usize, String)>,
    },
}

fn list_lines(lines: &[(usize, String)]) -> String {
    lines
        .iter()
        .map(|(n, m)| format!("\n  line {n}: {m}"))
        .collect()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
