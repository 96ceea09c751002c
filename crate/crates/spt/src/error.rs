use std::path::Path;

use spt_core::error::Error as CoreError;

pub type Result<T> = std::result::Result<T, Error>;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: u64, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("look-ahead join: {0}")]
    LookAhead(String),
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn parse(file: &str, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(file: &Path, source: std::io::Error) -> Self {
        Error::Io {
            file: file.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => EXIT_USAGE,
            Error::Parse { .. } | Error::Data(_) | Error::LookAhead(_) | Error::Io { .. } => EXIT_DATA,
            Error::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::AtStep { source, .. } => core_exit_code(source),
        CoreError::InvalidArgument(_)
        | CoreError::Domain(_)
        | CoreError::Membership { .. }
        | CoreError::NotLongOnly { .. }
        | CoreError::Evaluation { .. } => EXIT_DATA,
        CoreError::Numeric(_)
        | CoreError::UndefinedSharpe
        | CoreError::NoFeasiblePoint(_)
        | CoreError::Initialization(_)
        | CoreError::Resource(_) => EXIT_NUMERIC,
    }
}
