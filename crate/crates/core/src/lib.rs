//! Betti-number estimation for Vietoris–Rips complexes.
//!
//! The crate builds clique complexes from point clouds, represents the
//! boundary map as a sum of Pauli strings acting on a `2^n` statevector,
//! simulates the projection and Trotter circuits, and estimates normalized
//! Betti numbers with a stochastic Chebyshev trace estimator. Exact dense
//! oracles are provided for validation.

pub mod boundary;
pub mod chebyshev;
pub mod complex;
pub mod error;
pub mod oracle;
pub mod pipeline;
pub mod sim;

pub use error::{Error, Result};

/// Largest vertex count for paths that hold a full `2^n` amplitude array.
pub const N_MAX: usize = 24;

/// Largest vertex count for dense oracle paths.
pub const N_DENSE_MAX: usize = 12;

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
