use std::path::PathBuf;

use thiserror::Error;

/// A cell that could not be used when loading a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellIssue {
    /// Zero-based data row (the header is not counted).
    pub row: usize,
    pub column: String,
    pub message: String,
}

impl std::fmt::Display for CellIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {} column '{}': {}", self.row, self.column, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("{} invalid cell(s): {}", .0.len(), join_issues(.0))]
    InvalidCells(Vec<CellIssue>),

    #[error("duplicate subject id '{0}'")]
    DuplicateSubject(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty: {0}")]
    Empty(String),

    #[error("unknown site '{0}'")]
    UnknownSite(String),

    #[error("site '{site}' has {count} subject(s), at least {required} required")]
    SiteTooSmall {
        site: String,
        count: usize,
        required: usize,
    },

    #[error("stratum '{stratum}' has {size} member(s), at least {required} required")]
    StratumTooSmall {
        stratum: String,
        size: usize,
        required: usize,
    },

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error("empirical Bayes did not converge for site '{site}' after {iterations} iterations")]
    NoConvergence { site: String, iterations: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("repetition {repetition}, fold {fold}: {source}")]
    InFold {
        repetition: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

fn join_issues(issues: &[CellIssue]) -> String {
    const SHOWN: usize = 5;
    let mut s = issues
        .iter()
        .take(SHOWN)
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ");
    if issues.len() > SHOWN {
        s.push_str(&format!("; ... {} more", issues.len() - SHOWN));
    }
    s
}

impl Error {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::InvalidCells(_) => "invalid_cells",
            Error::DuplicateSubject(_) => "duplicate_subject",
            Error::Schema(_) => "schema",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Empty(_) => "empty",
            Error::UnknownSite(_) => "unknown_site",
            Error::SiteTooSmall { .. } => "site_too_small",
            Error::StratumTooSmall { .. } => "stratum_too_small",
            Error::SingularDesign(_) => "singular_design",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Degenerate(_) => "degenerate",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ModelFormat(_) => "model_format",
            Error::InFold { source, .. } => source.kind(),
        }
    }

    pub(crate) fn in_fold(self, repetition: usize, fold: usize) -> Error {
        Error::InFold {
            repetition,
            fold,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
