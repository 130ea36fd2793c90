use thiserror::Error;

/// Errors raised by the optimizer library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("rank deficiency: column {column} has |R_jj| = {diag:e} below tolerance {tol:e}")]
    RankDeficient { column: usize, diag: f64, tol: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("confinement violated at t = {t}: rho = {rho:e} > rho1 = {rho1:e} ({params})")]
    ConfinementViolation {
        t: u64,
        rho: f64,
        rho1: f64,
        params: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) => 2,
            Error::ConfinementViolation { .. }
            | Error::RankDeficient { .. }
            | Error::Contract(_)
            | Error::Dimension(_) => 3,
            Error::Parse { .. } | Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
