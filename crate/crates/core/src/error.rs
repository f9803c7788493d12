use alloc::string::String;

/// Errors raised by the dimension-reduction toolkit.
///
/// Degeneracy and non-convergence carry the numbers a caller needs to decide
/// what to do next (switch to the tempered construction, raise the stage
/// budget, ...).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CisError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("factorization error: {0}")]
    Factorization(String),
    #[error("weight degeneracy (ESS = {ess:.3}): {context}")]
    Degeneracy { ess: f64, context: String },
    #[error("rank selection produced an empty informed subspace")]
    EmptySubspace,
    #[error("no convergence after {stages} stages (last beta = {beta:.6})")]
    NonConvergence { stages: usize, beta: f64 },
    #[error("model evaluation failed: {0}")]
    Model(String),
}

pub type Result<T> = core::result::Result<T, CisError>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::CisError::Validation(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
