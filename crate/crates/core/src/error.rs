use thiserror::Error;

/// Errors raised across the crate.
///
/// Usage errors are caller mistakes (bad arguments, illegal actions, role
/// violations). Checker verdicts such as "not linearizable" are values, not
/// errors; only conditions that stop a computation are reported here.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("replay diverged at seq {seq}: expected `{expected}`, got `{actual}`")]
    Divergence {
        seq: usize,
        expected: String,
        actual: String,
    },

    #[error("node ceiling of {ceiling} exceeded after {nodes} nodes")]
    Ceiling { ceiling: u64, nodes: u64 },

    #[error("rule coverage: {0}")]
    RuleCoverage(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
