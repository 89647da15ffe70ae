use std::path::PathBuf;

use thiserror::Error;

use crate::mub::VerifyReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max |M - M^dag| = {0:.3e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("{0} is not prime; use the 2^r construction or load a basis file")]
    NotPrime(usize),

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },

    #[error("operators do not commute (max commutator norm {0:.3e})")]
    NonCommuting(f64),

    #[error("could not resolve a non-degenerate common eigenbasis after {attempts} attempts")]
    UnresolvedDegeneracy { attempts: usize },

    #[error("parameter {name} = {value} out of range {range}")]
    InvalidParameter {
        name: String,
        value: f64,
        range: &'static str,
    },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("pseudoinverse identity violated: ||B K B - B||_F = {0:.3e}")]
    PseudoinverseIdentity(f64),

    #[error("process matrix has eigenvalue {0:.3e}; run refine_physical first")]
    NegativeEigenvalue(f64),

    #[error("fidelity undefined: Tr(chi_ref^2) = {0:.3e}")]
    UndefinedFidelity(f64),

    #[error("MUB verification failed: {0}")]
    VerificationFailed(VerifyReport),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of a numerical check as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PseudoinverseIdentity(_)
                | Error::NegativeEigenvalue(_)
                | Error::UndefinedFidelity(_)
                | Error::UnresolvedDegeneracy { .. }
                | Error::NonCommuting(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
