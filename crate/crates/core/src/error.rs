use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("a cell string needs at least 2 cells, got {0}")]
    TooFewCells(usize),

    #[error("sensor cell {index} is outside 1..={cells}")]
    SensorOutOfRange { index: usize, cells: usize },

    #[error("sensor cell {0} listed more than once")]
    DuplicateSensor(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hurwitz (spectral abscissa {0:.6e})")]
    NotHurwitz(f64),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step} s is outside the integrator's stability region (|lambda|*h = {product:.3})")]
    UnstableStep { step: f64, product: f64 },

    #[error("exhaustive search over {count} subsets exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
