use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid probability map: {0}")]
    InvalidProbabilityMap(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("empty point cloud: {0}")]
    EmptyCloud(&'static str),

    #[error("point cloud has {len} points, oracle accepts at most {max}")]
    CloudTooLarge { len: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid persistence pair ({birth}, {death}): {reason}")]
    InvalidPair {
        birth: f64,
        death: f64,
        reason: &'static str,
    },

    #[error("diagram degree mismatch: {0} vs {1}")]
    DegreeMismatch(u8, u8),

    #[error("essential class count mismatch: {0} vs {1}")]
    EssentialMismatch(usize, usize),

    #[error("invalid cost matrix: {0}")]
    InvalidCostMatrix(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("{path}: byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training error: {0}")]
    Training(String),
}
