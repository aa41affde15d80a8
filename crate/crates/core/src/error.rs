use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Range(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("divergence undefined: p has mass at ordinal {ordinal} where q has none")]
    UndefinedDivergence { ordinal: u32 },

    #[error("weights sum to {sum}, expected 1")]
    Normalization { sum: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error("cluster {cluster} is dead (prior {prior:e})")]
    DeadCluster { cluster: usize, prior: f64 },

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("input has support outside every centroid: {verbs:?}")]
    OutOfSupport { verbs: Vec<String> },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("model file section {section}: {msg}")]
    ModelFormat { section: String, msg: String },

    #[error("did not converge within {iters} iterations")]
    NonConvergence { iters: usize },

    #[error("annealing stalled at beta {beta} with {clusters} clusters")]
    Stalled { beta: f64, clusters: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(section: &str, msg: impl Into<String>) -> Self {
        Error::ModelFormat {
            section: section.to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EmptyInput(_) | Error::InsufficientData(_) => 3,
            Error::NonConvergence { .. } | Error::Stalled { .. } => 4,
            _ => 2,
        }
    }
}
