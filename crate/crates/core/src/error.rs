use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quantiles are not monotone non-decreasing: {0:?}")]
    NonMonotone([f64; 5]),

    #[error("quantiles contain a non-finite value: {0:?}")]
    NonFinite([f64; 5]),

    #[error("lowest quantile {0} is negative for a count measure")]
    NegativeForCountMeasure(f64),

    #[error("no model reported {measure} for region {region}")]
    EmptyGroup { measure: String, region: String },

    #[error("duplicate record for ({measure}, {region}, {model})")]
    DuplicateKey {
        measure: String,
        region: String,
        model: String,
    },

    #[error("interquartile range is zero, skewness undefined")]
    ZeroIqr,

    #[error("gamma fit failed: {0}")]
    GammaFitFailure(String),

    #[error("invalid search box: {0}")]
    InvalidBounds(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("need at least 2 models to pool, got {0}")]
    TooFewModels(usize),

    #[error("need at least {needed} daily values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("need at least 2 sub-areas, got {0}")]
    TooFewSubareas(usize),

    #[error("no rows to render")]
    EmptyRows,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
