use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Ensemble parameters violate their invariants (β ≤ 0, Bose with ω ≤ 0, ...).
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    /// A target is not attainable (density outside the range of μ ↦ m).
    #[error("range error: {0}")]
    Range(String),
    /// Conditioning on an event of probability zero.
    #[error("impossible condition: {0}")]
    ImpossibleCondition(String),
    /// A documented precondition of an oracle does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Quadrature, sampling or other numerical failure.
    #[error("numeric error: {0}")]
    Numeric(String),
}
