use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CdError> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum CdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad mask: {0}")]
    BadMask(String),

    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),

    #[error("band {band} is constant (min = max = {value})")]
    DegenerateBand { band: usize, value: f32 },

    #[error("scene of {height}x{width} is smaller than patch size {patch}")]
    SceneTooSmall {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("spatial size {0} is not divisible by 8")]
    BadSpatialDims(usize),

    #[error("non-binary input: {0}")]
    NonBinaryInput(String),

    #[error("blob {index} does not fit inside the scene")]
    BlobOutOfBounds { index: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    Divergence {
        epoch: usize,
        step: usize,
        last_good: Option<PathBuf>,
    },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl CdError {
    /// Process exit status for the command-line tool: 3 for a diverged
    /// training run, 2 for every usage or input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CdError::Divergence { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CdError::Io {
            path: path.into(),
            source,
        }
    }
}
