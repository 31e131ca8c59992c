use thiserror::Error;

/// Errors produced by the watermarking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A geometric operation was given a mask with no object pixels, or a
    /// warp moved every object pixel out of the output frame.
    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("placement infeasible: {0}")]
    PlacementInfeasible(String),

    #[error("capacity exceeded: {bits} bits requested but only {blocks} blocks available")]
    CapacityExceeded { bits: usize, blocks: usize },

    #[error("no usable watermark signal: {0}")]
    NoSignal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
