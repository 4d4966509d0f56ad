use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported channel count {channels} in {}", path.display())]
    UnsupportedChannels { path: PathBuf, channels: u8 },

    #[error("cannot write {}: {reason}", path.display())]
    Write { path: PathBuf, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },

    #[error("singular affine matrix (determinant {0:e})")]
    SingularMatrix(f64),

    #[error("ill-conditioned thin plate spline system (rcond {0:e})")]
    IllConditioned(f64),

    #[error("no valid placement after {0} attempts")]
    PlacementFailed(u32),

    #[error("asset has no opaque pixels")]
    TransparentAsset,

    #[error("asset does not overlap the canvas")]
    NoOverlap,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid fish-count distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("replay mismatch for {what}: {detail}")]
    ReplayMismatch { what: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
