use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("Gram matrix singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("{what} would need {entries} entries, limit is {limit}")]
    Resource {
        what: &'static str,
        entries: u128,
        limit: u128,
    },

    #[error("Monte Carlo draw {draw}: {source}")]
    Draw {
        draw: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("closed-form approximation broke down: {0}")]
    Approximation(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("scenario invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by ill-posed numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::Singular { .. }
            | Error::Approximation(_)
            | Error::Solver(_) => true,
            Error::Draw { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
