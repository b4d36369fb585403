use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("axis {axis} out of range for tensor of rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {rank} out of range [1, {max}]")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("kernel has zero Frobenius norm")]
    ZeroNorm,

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
