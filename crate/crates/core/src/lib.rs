//! Numerical laboratory for disordered quantum lattice models.
//!
//! The crate builds finite truncations of random Schrödinger-type operators
//! (sparse Jacobi matrices, Anderson boxes, almost-Mathieu chains, Kronecker
//! sums), analyzes spectral measures through their Fourier–Stieltjes
//! transforms, runs time evolution and transport diagnostics, drives the
//! Bethe-lattice cavity recursion, enumerates Edwards–Anderson cluster ground
//! states, and evaluates return-to-equilibrium decay curves — all with
//! seeded, worker-count-independent disorder averaging.

pub mod bethe;
pub mod disorder;
pub mod dynamics;
pub mod ea;
pub mod emch;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod linalg;
pub mod numeric;
pub mod spectral;

pub use error::{Error, Result};
