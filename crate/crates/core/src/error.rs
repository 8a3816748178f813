use std::path::PathBuf;

/// Errors raised by the simulation and estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid field `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("channel overlap: anchors {first} and {second} are {spacing_hz:.1} Hz apart, pass band is {pass_band_hz:.1} Hz")]
    ChannelOverlap {
        first: u32,
        second: u32,
        spacing_hz: f64,
        pass_band_hz: f64,
    },

    #[error("band too narrow: {width_hz:.1} Hz cannot hold a {pass_band_hz:.1} Hz channel")]
    BandTooNarrow { width_hz: f64, pass_band_hz: f64 },

    #[error("shake range exceeds distance: d = {d} m, L = {distance} m")]
    ShakeExceedsDistance { d: f64, distance: f64 },

    #[error("sample rate mismatch: {expected} Hz vs {found} Hz")]
    RateMismatch { expected: f64, found: f64 },

    #[error("unmeetable filter spec: {0}")]
    UnmeetableFilter(String),

    #[error("initialization not static: acceleration spread {spread:.3} m/s^2 exceeds {threshold:.3}")]
    NotStatic { spread: f64, threshold: f64 },

    #[error("rank deficient system, degenerate directions: {}", .directions.join(", "))]
    RankDeficient { directions: Vec<String> },

    #[error("phone tilted {tilt_deg:.2} deg, tolerance {tolerance_deg:.2} deg")]
    Tilted { tilt_deg: f64, tolerance_deg: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inconsistent Doppler signs: {0}")]
    InconsistentSigns(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wave file error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ConfigParse { .. }
            | Error::Invariant { .. }
            | Error::ChannelOverlap { .. }
            | Error::BandTooNarrow { .. }
            | Error::ShakeExceedsDistance { .. } => ErrorCategory::Config,
            Error::Io { .. } | Error::Wav(_) => ErrorCategory::Io,
            _ => ErrorCategory::Pipeline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Pipeline,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Pipeline => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
