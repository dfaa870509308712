//! Dyadic analysis over finite measures of polynomial growth.
//!
//! The crate builds a nested lattice of cubes over a weighted point cloud,
//! extracts the filtration of doubling cubes from it, and evaluates the
//! martingale objects living on that filtration: BMO-type norms, sparse
//! domination of singular integrals, weighted bounds, Calderón–Zygmund
//! decompositions and their matrix-valued counterparts.

pub mod bundled;
pub mod cli;
pub mod error;
pub mod filtration;
pub mod lattice;
pub mod linalg;
pub mod matrixval;
pub mod measure;
pub mod operators;
pub mod report;
pub mod sparse;
pub mod spaces;

pub use error::{Error, Result};
pub use filtration::Filtration;
pub use lattice::{Lattice, LatticeParams};
pub use measure::{Ball, PointMeasure, ScalarField};
