//! Operator-adapted Littlewood-Paley calculus for discretized Schrodinger
//! operators `H = -Δ + V` on periodic boxes.
//!
//! The crate is organized bottom-up:
//!
//! - [`lattice`]: grids, complex fields, discrete `L^p` norms, potentials, field files.
//! - [`dyadic`]: smooth dyadic partitions of unity `{φ_j}`.
//! - [`hamiltonian`]: matrix-free `H` with a spectral enclosure and a dense oracle.
//! - [`funcalc`]: Chebyshev functional calculus `g(H) f`.
//! - [`norms`]: Besov / Triebel-Lizorkin norms adapted to `H`, Kato and Rollnik functionals.
//! - [`evolve`]: the propagator `e^{-itH}`.
//! - [`decaylab`]: decay experiments and their reports.
//! - [`suite`]: the acceptance checks, shared by the test target and the CLI.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decaylab;
pub mod dyadic;
mod error;
pub mod evolve;
mod fft;
pub mod funcalc;
pub mod hamiltonian;
pub mod lattice;
pub mod norms;
pub mod rng;
pub mod suite;

pub use error::{Error, Result};
pub use num_complex::Complex64;
