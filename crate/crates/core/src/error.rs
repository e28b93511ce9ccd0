use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("config error {}: {msg}", location(*line))]
    Config { line: usize, msg: String },

    #[error("statistical acceptance failure: {0}")]
    Statistical(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config { .. } => 2,
            Error::Geometry(_) | Error::Domain(_) => 3,
            Error::Statistical(_) => 4,
            Error::Integrity(_) | Error::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn location(line: usize) -> String {
    if line == 0 {
        "on the command line".into()
    } else {
        format!("at line {line}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
