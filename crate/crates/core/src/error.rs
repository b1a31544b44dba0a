use std::path::PathBuf;

/// Errors produced by the tracking engine and its file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("marker {marker} at ({x:.3}, {y:.3}) px lies outside the {width}x{height} px sensor frame")]
    GridOutOfBounds {
        marker: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("invalid marker geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid marker layout: {0}")]
    InvalidLayout(String),

    /// The layout failed validation against a tracker configuration.
    #[error("layout rejected for tracking: {0}")]
    LayoutInvalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported format_version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
