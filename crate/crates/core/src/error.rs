use thiserror::Error;

/// Parser error categories, each carrying a source location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownOp,
    ModeRange,
    ParamRange,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParseErrorKind::Syntax => "E_SYNTAX",
            ParseErrorKind::UnknownOp => "E_UNKNOWN_OP",
            ParseErrorKind::ModeRange => "E_MODE_RANGE",
            ParseErrorKind::ParamRange => "E_PARAM_RANGE",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symplectic")]
    NotSymplectic,

    #[error("covariance matrix violates the uncertainty relation")]
    UncertaintyViolation,

    #[error("channel is not completely positive")]
    NotCompletelyPositive,

    #[error("singular or ill-conditioned matrix: {0}")]
    SingularMatrix(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("{kind} at line {line}, column {col}: {msg}")]
    Parse {
        kind: ParseErrorKind,
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("scheme error at line {line}: {msg}")]
    Scheme { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
