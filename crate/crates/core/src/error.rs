use std::path::PathBuf;

/// Errors produced anywhere in the planning and learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pose ({x:.3}, {y:.3}) lies outside the feature map")]
    OutOfBounds { x: f64, y: f64 },

    #[error("planning failure: {0}")]
    PlanningFailure(String),

    #[error("odometry covers [{have_start:.3}, {have_end:.3}] s but [{need_start:.3}, {need_end:.3}] s is required")]
    Coverage {
        have_start: f64,
        have_end: f64,
        need_start: f64,
        need_end: f64,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("expert demonstration stopped early: {reason}")]
    ExpertTruncated {
        reason: String,
        partial: Box<crate::demos::OdometryRecord>,
    },

    #[error("replay buffer contains no cycle with a valid demonstration")]
    EmptyBuffer,

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence {
        epoch: usize,
        reason: String,
        /// Last finite weight vector seen before divergence.
        last_theta: Vec<f64>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
