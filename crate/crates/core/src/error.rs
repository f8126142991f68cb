use std::io;

use thiserror::Error;

use crate::tensor::Dim;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor has no `{0}` dimension")]
    UnknownDim(Dim),
    #[error("dimension `{0}` appears more than once")]
    DuplicateDim(Dim),
    #[error("extent of `{dim}` must be even, got {extent}")]
    OddExtent { dim: Dim, extent: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tensor contains a non-finite value")]
    NonFinite,

    #[error("bad magic {0:?}, expected \"KSP1\"")]
    BadMagic([u8; 4]),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("declared extents overflow the addressable size")]
    ExtentOverflow,
    #[error("unknown dimension tag {0}")]
    BadDimTag(u8),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("calibration data is identically zero")]
    ZeroCalibration,
    #[error("empty subspace: no singular value above the threshold")]
    EmptySubspace,
    #[error("reference has zero norm")]
    ZeroReference,
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
