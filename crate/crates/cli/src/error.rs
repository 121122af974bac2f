use std::path::PathBuf;

use geonet_core::GeonetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}:{line}{}: {message}", file.display(), col.map(|c| format!(":{c}")).unwrap_or_default())]
    Parse {
        file: PathBuf,
        line: usize,
        col: Option<usize>,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] GeonetError),
}

impl CliError {
    /// 1 usage or parse, 2 numeric failure, 3 validation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Io { .. } => 1,
            CliError::Validation(_) => 3,
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::Core(GeonetError::Parse { .. }) => 1,
            CliError::Core(_) => 3,
        }
    }

    /// Attaches the file name to a line-anchored parse error from the core.
    pub fn in_file(e: GeonetError, file: &std::path::Path) -> CliError {
        match e {
            GeonetError::Parse { line, message } => CliError::Parse {
                file: file.to_path_buf(),
                line,
                col: None,
                message,
            },
            other => CliError::Core(other),
        }
    }
}
