//! Certified secret-key-rate lower bounds for decoy-state BB84 and MDI-QKD.
//!
//! The pipeline runs channel simulation → coarse-graining → decoy linear
//! programs → a Frank–Wolfe minimization of the relative-entropy objective
//! over the decoy-constrained density-operator set, certified by a
//! linearized dual bound.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the CLI uses.

// Index loops mirror the matrix formulas; negated comparisons reject NaN.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]

pub mod analytics;
pub mod channel;
pub mod config;
pub mod decoy;
pub mod diagnostics;
pub mod error;
pub mod keyrate;
pub mod linalg;
pub mod mapping;
pub mod pipeline;
pub mod protocols;
pub mod quantum;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type Matrix = linalg::ComplexMatrix<f64>;
pub type Hermitian = quantum::HermitianOperator<f64>;
pub type Density = quantum::DensityOperator<f64>;
pub type Protocol = protocols::ProtocolDescription<f64>;
pub type RawTable = channel::RawPatternTable<f64>;
pub type Observations = mapping::ObservationTable<f64>;
pub type Bounds = decoy::PhotonBounds<f64>;
pub type Lp = decoy::LinearProgram<f64>;
pub type Feasible = sdp::FeasibleSet<f64>;
pub type KeyRate = keyrate::KeyRateResult<f64>;
