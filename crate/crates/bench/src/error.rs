use std::path::PathBuf;

use thiserror::Error;

/// Failures of the runner and the file formats, grouped by exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad configuration; `line` is 1-based when the problem has a location.
    #[error("{}", fmt_config(*line, key.as_deref(), message))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn fmt_config(line: Option<usize>, key: Option<&str>, message: &str) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!("config line {l}: `{k}`: {message}"),
        (Some(l), None) => format!("config line {l}: {message}"),
        (None, Some(k)) => format!("config: `{k}`: {message}"),
        (None, None) => format!("config: {message}"),
    }
}

impl BenchError {
    pub fn config(line: Option<usize>, key: &str, message: impl Into<String>) -> Self {
        BenchError::Config {
            line,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Output {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config { .. } | BenchError::Output { .. } => 2,
            BenchError::Data(_) => 3,
            BenchError::Numeric(_) => 4,
        }
    }
}

impl From<permucate::Error> for BenchError {
    fn from(e: permucate::Error) -> Self {
        use permucate::Error as E;
        match e {
            E::Numeric(_) => BenchError::Numeric(e.to_string()),
            E::InvalidSpec(_) | E::InvalidArgument(_) => BenchError::Config {
                line: None,
                key: None,
                message: e.to_string(),
            },
            _ => BenchError::Data(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
