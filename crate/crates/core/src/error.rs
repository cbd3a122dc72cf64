use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x}, {y}) lies outside the window")]
    OutsideWindow { x: f64, y: f64 },

    #[error("prior for `{param}` has (numerically) zero mass on its truncation interval")]
    ZeroPriorMass { param: String },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("lasso did not converge after {sweeps} sweeps (max change {achieved:e})")]
    NoConvergence { sweeps: usize, achieved: f64 },

    #[error("pilot screen failure: {failed} of {total} draws had n <= {m}")]
    ScreenFailure { failed: usize, total: usize, m: usize },

    #[error("mismatched input: {0}")]
    Mismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed pattern file: {}", .0.join("; "))]
    MalformedPattern(Vec<String>),

    #[error("{module}: {source}")]
    Context {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, module: &'static str) -> Self {
        Error::Context {
            module,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
