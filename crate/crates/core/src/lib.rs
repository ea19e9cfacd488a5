//! Analytic discs attached to generic CR graphs.
//!
//! The crate solves the Bishop equation for discs glued to a manifold
//! `x = h(w, y)`, computes partial indices of loops of maximally real frames,
//! raises those indices by twisting, and builds finite-dimensional families of
//! nearby attached discs with a fixed center.

pub mod bishop;
pub mod cli;
pub mod boundary;
pub mod conjugation;
pub mod error;
pub mod frames;
pub mod globevnik;
mod linalg;
pub mod poly;
pub mod report;
pub mod twist;

pub use boundary::{BoundaryFunction, BoundaryGrid, SmoothnessReport};
pub use conjugation::ConjugationKind;
pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
