use std::path::PathBuf;

use crate::se3::Frame;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),

    #[error("color count {colors} does not match point count {points}")]
    ColorCountMismatch { points: usize, colors: usize },

    #[error("expected a point cloud in the {expected} frame, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid capture log: {0}")]
    InvalidLog(String),

    #[error("invalid demonstration: {0}")]
    InvalidDemo(String),

    #[error("invalid object configuration: {0}")]
    InvalidConfig(String),

    #[error("segmentation failed: {0}")]
    Segmentation(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("frame {frame}: visible point set is empty")]
    EmptyVisibleSet { frame: usize },

    #[error("need {needed} points for sampling, cloud has {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem itself, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::AtFrame { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub(crate) fn at_frame(frame: usize, source: Error) -> Self {
        Error::AtFrame {
            frame,
            source: Box::new(source),
        }
    }
}
