//! Error types shared by all modules of the crate.

use thiserror::Error;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum CurvworkError {
    /// A matrix expected to be Hermitian deviated from its conjugate
    /// transpose by more than the construction tolerance.
    #[error("matrix is not Hermitian: max |M - M\u{2020}| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    /// A density matrix failed one of its defining invariants.
    #[error("invalid density matrix: {reason}")]
    InvalidDensity { reason: String },

    /// The generator has a (near-)degenerate stationary subspace: the two
    /// smallest singular values of the scale-normalized superoperator matrix
    /// are closer than the uniqueness threshold.
    #[error(
        "degenerate steady state: two smallest normalized singular values \
         {s0:.3e} and {s1:.3e} are within {threshold:.1e}"
    )]
    DegenerateSteadyState { s0: f64, s1: f64, threshold: f64 },

    /// The candidate stationary state has a significantly negative eigenvalue.
    #[error("stationary state is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NonPositive { min_eig: f64 },

    /// A linear solve against the generator is ill-conditioned because the
    /// spectral gap is numerically zero.
    #[error("singular reduced solve: spectral gap {gap:.3e} below {threshold:.1e}")]
    SingularSolve { gap: f64, threshold: f64 },

    /// A residual check after a linear solve failed.
    #[error("solution residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    /// An operator that must be traceless has a nonzero trace.
    #[error("operator is not traceless: |trace| = {trace_norm:.3e}")]
    NotTraceless { trace_norm: f64 },

    /// Operands have incompatible dimensions.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A finite-difference step degenerated below the representable minimum.
    #[error("finite-difference step {step:.3e} below minimum 1e-9")]
    StepUnderflow { step: f64 },

    /// A quadrature did not converge under node doubling.
    #[error(
        "quadrature not converged: node doubling changed the result by \
         {delta:.3e} > tolerance {tolerance:.3e}"
    )]
    QuadratureNotConverged { delta: f64, tolerance: f64 },

    /// The baseline (denominator) work of a work-reduction ratio vanishes.
    #[error("baseline cycle work is zero; work-reduction ratio undefined")]
    ZeroBaseline,

    /// The joint density evolution became unstable or lost probability.
    #[error("Fokker-Planck instability: {reason}")]
    FpInstability { reason: String },

    /// A numerical procedure produced a value outside its guaranteed range,
    /// such as a positive-definite integral evaluating to zero.
    #[error("numerical instability: {context}")]
    NumericalInstability { context: String },

    /// A stochastic trajectory left the declared control domain under the
    /// rejecting boundary policy.
    #[error(
        "trajectory exited the control domain at step {step}: \
         coordinate {coordinate} reached {value:.6e}"
    )]
    DomainExit { step: usize, coordinate: usize, value: f64 },

    /// A dense linear-algebra backend call failed.
    #[error("linear algebra backend failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    /// A precondition on user-supplied input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CurvworkError>;
