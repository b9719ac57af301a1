//! Dense linear algebra kernels.

mod dense;
mod eigen;
mod matrix;

pub use dense::RealSquare;
pub use eigen::{inv_hpd, inv_sqrt, min_eigenvalue, HermitianEigen};
pub use matrix::{kron2, ComplexMatrix};
