//! Nonnegative and Metzler Hessenberg forms.
//!
//! Decides when a nonnegative or Metzler matrix is similar to a nonnegative
//! or Metzler upper Hessenberg matrix, builds the transformations, and emits
//! checkable certificates or structured obstructions.

pub mod cli;
pub mod cones;
pub mod constructions;
pub mod error;
pub mod heuristics;
pub mod jordan;
pub mod linalg;
pub mod matrix;
pub mod possys;
pub mod simplex;

pub use error::{Error, Result};
pub use matrix::{Matrix, Vector};
