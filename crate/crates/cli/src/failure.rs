//! Failure categories mapped to process exit codes.

use std::process::ExitCode;

/// What went wrong, coarsely: bad invocation (exit 1), bad or missing
/// input data (exit 2), or a bug on our side (exit 3).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(1),
            Failure::Data(_) => ExitCode::from(2),
            Failure::Internal(_) => ExitCode::from(3),
        }
    }

    pub fn report(&self) {
        match self {
            Failure::Usage(msg) => eprintln!("error: {msg}"),
            Failure::Data(e) => eprintln!("error: {e:#}"),
            Failure::Internal(e) => eprintln!("internal error: {e:#}"),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

pub fn data_msg(msg: impl Into<String>) -> Failure {
    Failure::Data(anyhow::anyhow!(msg.into()))
}

/// Tags a fallible result with context and a failure category.
pub trait FailCtx<T> {
    fn or_data(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
    fn or_internal(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> FailCtx<T> for Result<T, E> {
    fn or_data(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into().context(what())))
    }

    fn or_internal(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into().context(what())))
    }
}
