use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid factor index {index} for {count} factors")]
    InvalidFactor { index: usize, count: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace {trace} is not 1")]
    NotNormalized { trace: f64 },

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("stream `{0}` is empty")]
    EmptyStream(&'static str),

    #[error("no coincidence peak in block {block} (snr {snr:.2})")]
    PeakNotFound { block: usize, snr: f64 },

    #[error("SDP is infeasible (phase-I residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("SDP did not converge in {iterations} iterations")]
    MaxIter { iterations: usize },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
