use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid too coarse: bin width {step} ps exceeds sigma/2 = {limit} ps")]
    GridTooCoarse { step: f64, limit: f64 },

    #[error("grid too short: curve support plus 6 sigma ({needed} ps) exceeds grid half-extent {extent} ps")]
    GridTooShort { needed: f64, extent: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no interior maximum on [{lo}, {hi}]: visibility is monotone, best value at r = {at}")]
    NoInteriorMaximum { lo: f64, hi: f64, at: f64 },

    #[error("capacity exceeded: expected {expected:.0} events, cap is {cap}")]
    Capacity { expected: f64, cap: u64 },

    #[error("emitter outside low-occupancy regime: rate * tau_r = {occupancy} (must be < 0.1)")]
    Regime { occupancy: f64 },

    #[error("tail window invalid: {0}")]
    TailWindowInvalid(String),

    #[error("tail mean is zero; histogram cannot be normalized")]
    TailMeanZero,

    #[error("fit did not converge after {iterations} iterations (chi2 = {chi2})")]
    NonConvergence { iterations: usize, chi2: f64 },

    #[error("singular normal matrix; degenerate parameter directions: {}", .directions.join(", "))]
    SingularNormalMatrix { directions: Vec<String> },

    #[error("invalid fit initialisation: {0}")]
    InvalidInit(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error at `{field}`: {constraint}")]
    Validation { field: String, constraint: String },

    #[error("unknown field: {0}")]
    UnknownField(String),

    #[error("bad magic bytes: expected `TPI1`, found {found:?}")]
    MagicMismatch { found: Vec<u8> },

    #[error("unsorted input: channel {channel} record {index} precedes its predecessor")]
    UnsortedInput { channel: String, index: usize },

    #[error("truncated file: {0}")]
    TruncatedFile(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
