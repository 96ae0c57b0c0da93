//! Error type shared by all stitching stages.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("affine transform is singular (|ad - bc| <= 1e-12)")]
    SingularTransform,

    #[error("radial bin {bin} received no pixels; lower the bin count")]
    EmptyBin { bin: usize },

    #[error("polynomial fit is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("lens profile is invalid: {0}")]
    BadProfile(String),

    #[error("field of view {fov_deg} deg leaves no overlap band of at least one pixel")]
    NoOverlap { fov_deg: f64 },

    #[error("control points are degenerate (collinear or fewer than 3 pairs)")]
    DegenerateConfiguration,

    #[error("match confidence too low: peak gamma {peak_gamma:.4} < {min_peak_gamma:.4}")]
    LowConfidence { peak_gamma: f64, min_peak_gamma: f64 },

    #[error("panorama pixel ({x}, {y}) is covered by neither lens; check fov and profile")]
    CoverageHole { x: usize, y: usize },

    #[error("dual-fisheye frame must be 2:1 (two square halves), got {width}x{height}")]
    AspectMismatch { width: usize, height: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("profile parse error: {0}")]
    ProfileParse(#[from] toml::de::Error),

    #[error("profile encode error: {0}")]
    ProfileEncode(#[from] toml::ser::Error),

    #[error("report encode error: {0}")]
    ReportEncode(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
