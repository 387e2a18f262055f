//! Variable-thickness prestrained Föppl–von Kármán plates: material law,
//! limit energy, Airy potential and Euler–Lagrange diagnostics, 3D recovery
//! sequences and a quasi-Newton energy minimizer.

// `!(x > 0.0)` is used on purpose so that NaN fails validation, and node
// loops index several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod airy;
pub mod el;
pub mod energy;
pub mod error;
pub mod expr;
pub mod gamma;
pub mod grid;
pub mod linalg;
pub mod material;
pub mod ops;
pub mod problem;
pub mod solver;
pub mod stencil;

pub use error::{Error, Result};
pub use expr::Expr;
pub use grid::{Grid2D, GridField, MatrixField, ScalarField, VectorField};
pub use material::LameMaterial;
pub use problem::{Displacement, DisplacementExpr, GrowthTensor, PlateProblem, ThicknessPair};
