use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    SingularMatrix { pivot: usize, value: f64 },

    #[error("matrix is not positive semi-definite (pivot {pivot}, value {value:e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("propensity-model information matrix is singular")]
    SingularInformation,

    #[error("singular design: column `{column}` is collinear with the preceding columns")]
    SingularDesign { column: String },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },

    #[error("{what}: {failed} of {total} fits failed (limit is 10%)")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        total: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
