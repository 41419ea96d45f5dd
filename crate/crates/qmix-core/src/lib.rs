//! Numerical laboratory for quantum ergodicity and quantum mixing on finite
//! Schreier graphs converging to infinite Cayley graphs.
//!
//! The pipeline: a finitely generated group with a computable normal form
//! ([`group`]), finitely supported symbols in its group algebra ([`algebra`]),
//! permutation representations realizing the symbol as a sparse Hermitian
//! operator ([`action`]), full eigendecompositions and spectral windows
//! ([`spectra`]), Green functions of the limiting operator on the Cayley graph
//! ([`resolvent`]), eigenvector statistics testing quantum ergodicity and
//! mixing ([`quantum_stats`]), and the polynomial machinery that connects the
//! two sides: spectral-projector surrogates, Fejér count bounds, and trace
//! comparisons ([`approx`]).

pub mod action;
pub mod algebra;
pub mod approx;
pub mod group;
pub mod linalg;
pub mod quantum_stats;
pub mod resolvent;
pub mod rng;
pub mod sparse;
pub mod spectra;

pub type Complex = num_complex::Complex64;

/// Errors shared across the computational modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("unsupported query: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
