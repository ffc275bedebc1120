//! Sparse graphs, normalized structure matrices, a top-|λ| eigensolver and
//! small graph neural networks that take the leading eigenvectors as extra
//! input features.

pub mod csl;
pub mod error;
pub mod graph;
pub mod harness;
pub mod matrix_io;
pub mod nn;
pub mod par;
pub mod plugin;
pub mod rng;
pub mod spectral;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
pub use graph::SparseGraph;
pub use spectral::EigenBasis;
pub use structure::{StructureKind, StructureMatrix};
