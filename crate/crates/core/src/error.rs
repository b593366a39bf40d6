use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("point set is collinear")]
    Collinear,

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("piece {piece} degenerated under erosion: {reason}")]
    ErodedPiece { piece: usize, reason: String },

    #[error("puzzles require at least 2 pieces, got {0}")]
    TooFewPieces(usize),

    #[error("edge {edge} of piece {piece} is shorter than one pixel ({length:.3})")]
    EdgeTooShort {
        piece: usize,
        edge: usize,
        length: f64,
    },

    #[error("no extrapolated band for piece {0}")]
    MissingBand(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("piece {piece}: manifest declares {declared} vertices but lists {actual}")]
    VertexCountMismatch {
        piece: usize,
        declared: usize,
        actual: usize,
    },

    #[error("reference to nonexistent {0}")]
    DanglingReference(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Broad failure class, used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MissingFile(_) | Error::Io(_) | Error::Image(_) | Error::MissingBand(_) => {
                ErrorKind::Io
            }
            _ => ErrorKind::Validation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
}
