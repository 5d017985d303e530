use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("incidence angle {theta} rad outside [0, {theta_max}]")]
    ThetaOutOfRange { theta: f64, theta_max: f64 },

    #[error("radius {radius} outside the radial profile range [0, {max_radius}]")]
    RadiusOutOfRange { radius: f64, max_radius: f64 },

    #[error("radial profile is not strictly increasing on [0, theta_max]")]
    NonMonotonicProfile,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: String, actual: String },

    #[error("no valid pixels in the comparison region")]
    EmptyMask,

    #[error("empty point domain")]
    EmptyDomain,

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("parameter sampler exhausted after {0} rejections")]
    SamplerExhausted(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    ImageCodec {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
