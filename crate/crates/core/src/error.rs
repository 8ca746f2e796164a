use thiserror::Error;

pub type Result<T> = std::result::Result<T, CdeError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid term `{term}`: {reason}")]
    InvalidTerm { term: String, reason: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("exposure has a single arm (all units have a = {0})")]
    SingleArm(u8),

    #[error("baseline subset {{A=0, M=0}} is empty")]
    EmptyBaseline,

    #[error("rank-deficient design in {context} (condition number {cond:.3e})")]
    RankDeficient { context: String, cond: f64 },

    #[error("logistic fit did not converge: {0}")]
    Separation(String),

    #[error(
        "weak instruments: estimating-equation matrix is singular or near-singular \
         (condition number {cond:.3e}); the regularity condition C.4 requires it to be invertible"
    )]
    WeakInstrument { cond: f64 },

    #[error("singular matrix in {context} (condition number {cond:.3e})")]
    Singular { context: String, cond: f64 },

    #[error("proportion eliminated is undefined when the total effect is zero")]
    UndefinedPe,

    #[error("percent bias is undefined for a zero true value")]
    UndefinedBias,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid candidate model: {0}")]
    InvalidCandidate(String),

    #[error("every candidate model failed to fit")]
    AllCandidatesFailed,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for CdeError {
    fn from(e: csv::Error) -> Self {
        CdeError::Csv(e.to_string())
    }
}
