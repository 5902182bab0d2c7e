use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RadarError>;

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "target {index} at {range:.3} m lies outside the unambiguous range (0, {max_range:.3}) m"
    )]
    TargetOutOfRange {
        index: usize,
        range: f64,
        max_range: f64,
    },

    #[error("CFAR window ({window_range} x {window_doppler}) does not fit in a {map_range} x {map_doppler} map")]
    WindowTooLarge {
        window_range: usize,
        window_doppler: usize,
        map_range: usize,
        map_doppler: usize,
    },

    #[error("velocity candidate list is empty")]
    EmptyCandidates,

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("no detection: {0}")]
    NoDetection(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("cell ({range_bin}, {doppler_bin}) out of bounds ({n_range} x {n_doppler})")]
    CellOutOfBounds {
        range_bin: usize,
        doppler_bin: usize,
        n_range: usize,
        n_doppler: usize,
    },

    #[error("bad magic at offset {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: u64,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported version {version} at offset {offset}")]
    UnsupportedVersion { offset: u64, version: u16 },

    #[error("truncated file at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: u64, needed: u64 },

    #[error("malformed header at offset {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl RadarError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RadarError::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RadarError::Io {
            path: path.into(),
            source,
        }
    }
}
