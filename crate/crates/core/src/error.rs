use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate gaussian: covariance is singular")]
    DegenerateGaussian,

    #[error("direction is not unit length (|d| = {0})")]
    NonUnitDirection(f64),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("image too small for an 11x11 window: {0}x{1}")]
    ImageTooSmall(usize, usize),

    #[error("empty gaussian cloud")]
    EmptyCloud,

    #[error("voxel ({0}, {1}, {2}) is on the grid boundary")]
    BoundaryVoxel(usize, usize, usize),

    #[error("normalization factor must be positive, got {0}")]
    NonPositiveDenominator(f64),

    #[error("non-finite gradient for {param} of gaussian {index}")]
    NonFiniteGradient { param: &'static str, index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("camera rotation is not orthonormal (deviation {0:.3e})")]
    NonOrthonormalRotation(f64),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
