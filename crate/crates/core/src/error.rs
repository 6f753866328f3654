use thiserror::Error;

/// Which part of the pipeline produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Model,
    Basis,
    Pricer,
    MonteCarlo,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Model => "model",
            Stage::Basis => "basis",
            Stage::Pricer => "pricer",
            Stage::MonteCarlo => "mc",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{stage}: invalid input: {reason}")]
    InvalidInput { stage: Stage, reason: String },

    #[error("{stage}: raw moment of degree {degree} is not representable in double precision")]
    Overflow { stage: Stage, degree: usize },

    #[error("basis: cholesky breakdown at pivot {pivot}")]
    CholeskyBreakdown { pivot: usize },

    #[error("{stage}: likelihood ratio is not square integrable (nu^2 = {nu_sq} <= sigma^2 T / 2 = {threshold})")]
    NotSquareIntegrable {
        stage: Stage,
        nu_sq: f64,
        threshold: f64,
    },
}

impl Error {
    pub(crate) fn invalid(stage: Stage, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            stage,
            reason: reason.into(),
        }
    }

    /// The module that produced the error.
    pub fn stage(&self) -> Stage {
        match self {
            Error::InvalidInput { stage, .. }
            | Error::Overflow { stage, .. }
            | Error::NotSquareIntegrable { stage, .. } => *stage,
            Error::CholeskyBreakdown { .. } => Stage::Basis,
        }
    }

    /// True for failures of finite-precision arithmetic (overflow, loss of
    /// positive definiteness), false for rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow { .. } | Error::CholeskyBreakdown { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
