use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal `{0}` has zero variance")]
    ZeroVarianceSignal(String),
    #[error("invalid sample rate: {0}")]
    InvalidRate(String),
    #[error("lag window [{tau_min}, {tau_max}] leaves no valid rows for a series of length {len}")]
    WindowTooLarge { tau_min: i64, tau_max: i64, len: usize },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("singular normal equations: {0}")]
    SingularSystem(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel order mismatch: expected {expected:?}, found {found:?}")]
    ChannelOrderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("need at least {needed} trials, got {got}")]
    InsufficientTrials { needed: usize, got: usize },
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("series too short: need more than {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no grid point has density above {level}")]
    EmptySupport { level: f64 },
    #[error("no rate-distortion points")]
    NoPoints,
    #[error("regressor has no spread")]
    DegenerateX,
    #[error("distortion must be positive to express in dB, got {0}")]
    NonpositiveDistortion(f64),
    #[error("unstable model: spectral radius {0} >= 1")]
    UnstableModel(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// True for failures caused by the numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem(_)
                | Error::DegenerateCovariance(_)
                | Error::UnstableModel(_)
                | Error::EmptySupport { .. }
                | Error::DegenerateX
                | Error::ZeroVarianceSignal(_)
        )
    }
}
