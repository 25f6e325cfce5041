//! Hamiltonians `H(θ,I) = α·I + ε f(θ,I)` with `f` a finite Fourier–Taylor
//! field: a trigonometric polynomial in the angles whose coefficients are
//! polynomials in the actions. On this class averaging, differentiation and
//! Poisson brackets are exact, so no operation in the crate carries
//! quadrature error.

mod field;
mod io;
mod poly;

pub use field::{FieldBuilder, FourierTaylorField, Hamiltonian, ModePoly, ModelError};
pub use io::{load_model, save_model, validate_model_file, ModeEntry, ModelFile, TermEntry};
pub use poly::{taylor_jet, ActionPolynomial, JetPolynomial, PolyError};
