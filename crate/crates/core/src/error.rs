use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: worker {worker} already has an edge in period {period}")]
    DuplicateWorkerPeriod {
        row: usize,
        worker: String,
        period: String,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: field `{column}` is not numeric: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trace of annihilator {trace} is not close to an integer; input is ill-conditioned")]
    TraceNotIntegral { trace: f64 },
    #[error("design is rank deficient: rank {rank} < {columns} columns")]
    RankDeficient { rank: usize, columns: usize },
    #[error("covariates are absorbed by the heterogeneity design (x2'(I - P)x2 is singular)")]
    SingularDesign,
    #[error("no residual degrees of freedom (trace(I - P) = 0)")]
    ZeroDegreesOfFreedom,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("outcome space of {n} binary outcomes exceeds enumeration cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("unknown tetrad case: {0}")]
    UnknownCase(String),
    #[error("no block carries an informative moment restriction")]
    NoInformativeBlocks,
    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),
    #[error("no mover blocks in the data")]
    NoMoverBlocks,

    #[error("pattern search requires exactly two periods, found {0}")]
    PatternRequiresTwoPeriods(usize),
    #[error("infeasible simulation config: {0}")]
    InfeasibleConfig(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DuplicateWorkerPeriod { .. } => "DuplicateWorkerPeriod",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumeric { .. } => "NonNumeric",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "Io",
            Error::NonFinite => "NonFinite",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::TraceNotIntegral { .. } => "TraceNotIntegral",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::SingularDesign => "SingularDesign",
            Error::ZeroDegreesOfFreedom => "ZeroDegreesOfFreedom",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::CapExceeded { .. } => "CapExceeded",
            Error::UnknownCase(_) => "UnknownCase",
            Error::NoInformativeBlocks => "NoInformativeBlocks",
            Error::NonConvergence(_) => "NonConvergence",
            Error::NoMoverBlocks => "NoMoverBlocks",
            Error::PatternRequiresTwoPeriods(_) => "PatternRequiresTwoPeriods",
            Error::InfeasibleConfig(_) => "InfeasibleConfig",
            Error::Config(_) => "Config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
