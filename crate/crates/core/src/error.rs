use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which hypothesis on the offspring law a validation failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Analyticity, Schröder case and non-triviality.
    A,
    /// Strict positivity of the mean matrix.
    B,
    /// Critical angle strictly above pi/2.
    C,
    /// Diagonalisable linear part at the origin with |mu_N|^2 < |mu_1|.
    D,
    /// Per-type probabilities summing to one.
    Normalization,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Condition::A => "(A)",
            Condition::B => "(B)",
            Condition::C => "(C)",
            Condition::D => "(D)",
            Condition::Normalization => "normalization",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("model parse error: {0}")]
    Parse(String),

    #[error("condition {condition} violated: {detail}")]
    Validation { condition: Condition, detail: String },

    #[error("rational model not supported here: {0}")]
    RationalUnsupported(&'static str),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("at point {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(condition: Condition, detail: impl Into<String>) -> Self {
        Error::Validation {
            condition,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(detail: impl Into<String>) -> Self {
        Error::Numeric(detail.into())
    }

    /// True for failures caused by the input model rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse(_)
            | Error::Validation { .. }
            | Error::RationalUnsupported(_)
            | Error::Io { .. } => true,
            Error::AtIndex { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
