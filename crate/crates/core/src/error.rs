use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel length mismatch: channel {channel} has {len} samples, expected {expected}")]
    ChannelLengthMismatch {
        channel: usize,
        len: usize,
        expected: usize,
    },
    #[error("signal has {len} samples, shorter than one window of {window_len}")]
    SignalTooShort { len: usize, window_len: usize },
    #[error("window length {0} must be even and nonzero")]
    OddWindow(usize),
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("covariance is singular: pivot {pivot} is {value:.3e} after loading")]
    SingularCovariance { pivot: usize, value: f64 },
    #[error("dewhitened eigenvector has a vanishing reference component ({0:.3e})")]
    DegenerateReference(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid direction grid: {0}")]
    Grid(String),
    #[error("reference ATF component vanishes at bin {bin}, direction index {direction}")]
    ZeroReference { bin: usize, direction: usize },
    #[error("nonpositive diagonal entry on channel {channel}: {value:.3e}")]
    NonpositiveDiagonal { channel: usize, value: f64 },
    #[error("cross-device pair set is empty")]
    EmptyPairSet,
    #[error("zero vector passed where a direction is required")]
    ZeroVector,
    #[error("frame {0} has an empty bin selection")]
    EmptySelection(usize),
    #[error("requested {requested} peaks from a grid of {grid} directions")]
    TooManyPeaks { requested: usize, grid: usize },
    #[error("score count mismatch: {truth} true DOAs vs {estimated} estimates")]
    CountMismatch { truth: usize, estimated: usize },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("source {0} is silent")]
    SilentSource(usize),
    #[error("reverberation time {t60} s too small for this room (absorption {absorption:.3} > 1)")]
    T60TooSmall { t60: f64, absorption: f64 },
    #[error("oracle activity requested but no truth is available")]
    MissingTruth,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("database file: {0}")]
    Database(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
