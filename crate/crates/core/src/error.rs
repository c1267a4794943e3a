use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the machining kernel, the synthesizer and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite {component} loss")]
    NonFinite { component: &'static str },

    /// A fit hit a non-finite loss; the losses recorded so far are kept.
    #[error("non-finite {component} loss after {} iterations", trajectory.len())]
    Aborted {
        component: &'static str,
        trajectory: Vec<crate::synth::TrajectoryRow>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("program format: {0}")]
    Format(String),

    #[error("empty mesh: {0}")]
    EmptyMesh(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
