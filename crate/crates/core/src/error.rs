use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A computation met an infinite or NaN value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A parameterized layer has zero norm, so the parameter scale is zero.
    #[error("degenerate parameter scale: layer {layer} has zero norm")]
    DegenerateScale { layer: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("{kind} in {file} at byte offset {offset}: {detail}")]
    Parse {
        kind: ParseErrorKind,
        file: String,
        offset: u64,
        detail: String,
    },

    #[error("run diverged at iteration {iteration}: loss={loss}, scales=({scale_low}, {scale_high})")]
    Diverged {
        iteration: usize,
        loss: f64,
        scale_low: f64,
        scale_high: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    BadMagic,
    Truncated,
    TrailingBytes,
    CountMismatch,
    LabelOutOfRange,
    BadRecordLength,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParseErrorKind::BadMagic => "bad magic number",
            ParseErrorKind::Truncated => "truncated file",
            ParseErrorKind::TrailingBytes => "unexpected trailing bytes",
            ParseErrorKind::CountMismatch => "image/label count mismatch",
            ParseErrorKind::LabelOutOfRange => "label out of range",
            ParseErrorKind::BadRecordLength => "length is not a whole number of records",
        };
        f.write_str(s)
    }
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
