use std::path::PathBuf;

/// Errors raised anywhere in the learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition (shape, range, sign).
    #[error("validation error: {0}")]
    Validation(String),

    /// An index or count fell outside its permitted range.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// A factorization or normalization could not be carried out.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A run configuration is inconsistent or could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// A text dataset file is malformed.
    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    /// A binary artifact is corrupt, truncated or from another format version.
    #[error("{}: {msg}", file.display())]
    Checkpoint { file: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Context attached by the sequence runner.
    #[error("domain {domain}: {source}")]
    Domain {
        domain: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_domain(self, domain: usize) -> Self {
        Error::Domain {
            domain,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            Error::Domain { source, .. } => source.exit_code(),
            Error::Validation(_)
            | Error::Bounds(_)
            | Error::Parse { .. }
            | Error::Checkpoint { .. }
            | Error::Io { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
