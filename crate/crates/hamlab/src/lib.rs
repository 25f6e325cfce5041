//! Numerical laboratory for near-integrable Hamiltonians `H(θ,I) = α·I + ε f(θ,I)`.
//!
//! The crate is organised around the objects such systems are made of:
//!
//! - [`freq`] — exact arithmetic on frequency vectors: the small-divisor
//!   profile `Ψ_α`, the affordable-cutoff function `Δ_α`, resonance detection
//!   and Diophantine certificates, all by full lattice enumeration.
//! - [`model`] — Hamiltonians with a finite Fourier–Taylor perturbation
//!   (trigonometric polynomial in the angles, polynomial in the actions), so
//!   that averaging, differentiation and Poisson brackets are exact.
//! - [`steepness`] — sampling-based checks of the genericity conditions
//!   G1–G4, including stable steepness of Taylor jets.
//! - [`symplectic`] — long-time structure-preserving integration (implicit
//!   midpoint, exact splitting for angle-only perturbations) with hitting-time
//!   and drift observables.
//! - [`normalform`] — first-order averaging: homological equation with a
//!   small-divisor cutoff, Lie transform realised as a numerical flow, and
//!   remainder measurement.
//! - [`experiment`] — batch sweeps reproducing the `τ ~ ε⁻¹` drift law on
//!   resonant models and drift confinement versus `Δ_α(c/ε)⁻¹` on
//!   non-resonant ones.
//! - [`cli`] — the `hamlab` command-line entry point.
//!
//! Angles live on the torus `Tⁿ = Rⁿ/Zⁿ` measured in full turns; all wave
//! factors are `e^{2πi k·θ}`. Frequency vectors are sup-norm normalised,
//! `max_i |α_i| = 1`.

// numeric kernels index into parallel slices, and `!(x > 0.0)` guards reject
// NaN along with nonpositive values
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod experiment;
pub mod freq;
pub mod model;
pub mod normalform;
pub mod steepness;
pub mod symplectic;

pub use freq::FrequencyVector;
pub use model::{ActionPolynomial, FourierTaylorField, Hamiltonian, JetPolynomial};
pub use symplectic::{IntegratorConfig, PhaseState, Trajectory};
