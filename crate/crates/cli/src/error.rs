use std::fmt;

use tvar_core::Error;

/// A core error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct CliError {
    pub stage: Option<String>,
    pub source: Error,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into()).into()
    }

    pub fn in_stage(stage: &str, source: Error) -> Self {
        Self { stage: Some(stage.to_string()), source }
    }

    /// 0 success, 1 I/O, 2 configuration, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.source {
            Error::Io(_) => 1,
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stage {
            Some(s) => write!(f, "stage `{s}`: {}", self.source),
            None => write!(f, "{}", self.source),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        Self { stage: None, source }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a stage name to any core result.
pub trait StageContext<T> {
    fn stage(self, name: &str) -> CliResult<T>;
}

impl<T, E: Into<Error>> StageContext<T> for std::result::Result<T, E> {
    fn stage(self, name: &str) -> CliResult<T> {
        self.map_err(|e| CliError::in_stage(name, e.into()))
    }
}
