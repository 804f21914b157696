use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("K_{nu}({x}) overflows double precision")]
    Overflow { nu: f64, x: f64 },

    #[error(
        "quadrature did not reach tolerance after {subdivisions} subdivisions \
         (estimate {estimate:e}, error {abs_error:e})"
    )]
    QuadratureFailure {
        subdivisions: usize,
        estimate: f64,
        abs_error: f64,
    },

    #[error("order derivative at x = {x:e} is below the reliable range (x < 1e-6)")]
    PrecisionLoss { x: f64 },

    #[error("invalid covariance parameters: {0}")]
    InvalidParams(String),

    #[error("invalid sampling design: {0}")]
    InvalidDesign(String),

    #[error("duplicate sampling locations at indices {first} and {second}")]
    DuplicatePoints { first: usize, second: usize },

    #[error("covariance matrix is not positive definite{}", pair_hint(.pair))]
    NotPositiveDefinite { pair: Option<(usize, usize)> },

    #[error("information matrix is singular (reciprocal condition {rcond:e})")]
    SingularInformation { rcond: f64 },

    #[error("covariate matrix is rank deficient")]
    RankDeficient,

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn pair_hint(pair: &Option<(usize, usize)>) -> String {
    match pair {
        Some((i, j)) => format!(" (locations {i} and {j} coincide)"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
