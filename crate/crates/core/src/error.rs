use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("vector norm {norm:e} is at or below the zero-norm guard")]
    NearZeroNorm { norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("SVD did not converge after {sweeps} Jacobi sweeps")]
    NonConvergence { sweeps: usize },

    #[error("invalid range [{lo}, {hi})")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("timestamp {ts} lies outside the timespan [{start}, {end}]")]
    OutOfSpan { ts: i64, start: i64, end: i64 },

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("invalid triplet: {0}")]
    InvalidTriplet(String),

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Numerical failures (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearZeroNorm { .. }
                | Error::NonFinite(_)
                | Error::NonConvergence { .. }
                | Error::NanLoss { .. }
        )
    }
}
