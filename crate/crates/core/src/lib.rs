//! Straggler-tolerant Richardson and Chebyshev iterations under a randomized
//! partial matrix-vector product model.

pub mod dense;
pub mod error;
pub mod harness;
pub mod laplacian;
pub mod mtx;
pub mod oracle;
pub mod partial;
pub mod solvers;
pub mod sparse;
pub mod spectral;
pub mod straggle;
pub mod verify;

pub use error::{Error, MatrixMarketError, Result};
pub use sparse::SparseMatrix;
