//! Configuration overrides, trajectory serialisation and plot data.

pub mod overrides;
pub mod plotdata;
pub mod writer;

use std::path::PathBuf;

use thiserror::Error;

pub use overrides::{apply_override, apply_overrides, load_config, parse_overrides};
pub use plotdata::emit_plotdata;
pub use writer::{format_float, read_csv, write_csv, write_json, write_log, OutputFormat, CSV_HEADER};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("log is empty")]
    EmptyLog,
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::File {
            path: path.into(),
            source,
        }
    }
}
