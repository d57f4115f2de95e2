//! Geometric thermodynamics of slowly driven open quantum systems.
//!
//! The crate computes, for small Lindblad systems steered through a manifold
//! of control parameters:
//!
//! * stationary states, spectral gaps, and the reduced (stationary-sector)
//!   pseudo-inverse of the Liouvillian ([`quantum`]);
//! * the work one-form `A_i(λ) = Tr[ρ*(λ) ∂_i H(λ)]`, its curvature two-form,
//!   the dissipation metric, and the finite-rate excess-work kernel
//!   ([`geometry`]);
//! * reversible cycle work by line and surface quadrature, Stokes-identity
//!   diagnostics, first-law bookkeeping, and the coherence-induced
//!   work-reduction ratio of curvature fluxes ([`cycles`]);
//! * the statistics of fluctuating work when the controls themselves diffuse:
//!   Stratonovich Monte Carlo, a conservative positivity-preserving joint
//!   (λ, W) Fokker–Planck solver, tilted-generator evolution of the work
//!   moment generating function, and Jarzynski-equality verification
//!   ([`stochastic`]).
//!
//! Conventions: ħ = k_B = 1, β = 1/T; work `W > 0` is performed *on* the
//! system. Superoperators act on column-stacked operators with
//! `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

pub mod cycles;
pub mod error;
pub mod geometry;
pub mod quantum;
pub mod stochastic;

pub use error::{CurvworkError, Result};
