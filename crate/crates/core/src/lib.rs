//! Exact-arithmetic toolkit for spectral stability experiments on finite
//! abelian groups.
//!
//! The crate measures, rather than assumes, the quantitative behavior of a
//! family of additive-combinatorics lemmas: large-spectrum structure, the
//! concentration/dispersion dichotomy for sets of bounded doubling, packet
//! almost-periodicity, and Bohr-set containment. Combinatorial quantities
//! (cardinalities, doubling constants, additive energy, coverage fractions)
//! are computed in exact integer/rational arithmetic; spectral quantities use
//! `f64` with audited identities tying the two sides together.

pub mod dichotomy;
pub mod error;
pub mod fourier;
pub mod groups;
pub mod harness;
pub mod periodicity;
pub mod ratio;
pub mod spectrum;
pub mod structure;

pub use error::{Error, Result};
pub use ratio::Rat;
