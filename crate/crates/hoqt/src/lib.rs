//! Higher-order quantum transformations of isometry operations.
//!
//! The crate provides labeled tensor algebra, Schur–Weyl representation data,
//! Choi-level channel and comb utilities, the isometry compressor, explicit
//! inversion / transposition / complex-conjugation protocols, and a
//! symmetry-reduced semidefinite program engine for optimal success
//! probabilities.

pub mod budget;
pub mod choi;
pub mod compressor;
pub mod error;
pub mod linalg;
pub mod protocols;
pub mod rep;
pub mod sdp;
pub mod symmetry;
pub mod task;
pub mod tensor;

pub use error::{HoqtError, Result};
pub use task::{Rational, Task};
pub use tensor::{CMatrix, LabeledOperator, RandomSource, Space, C64};
