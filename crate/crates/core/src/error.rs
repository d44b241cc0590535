use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for axis of length {len}")]
    OutOfBounds { index: usize, len: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("refractive index is zero at voxel {0:?}")]
    ZeroRefractiveIndex([usize; 3]),

    #[error("inputs are identical; PSNR is unbounded")]
    IdenticalInputs,

    #[error("evanescent frequency: |u| = {magnitude} exceeds k0 = {k0}")]
    Evanescent { magnitude: f64, k0: f64 },

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("unknown block id {0}")]
    UnknownBlock(usize),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}
