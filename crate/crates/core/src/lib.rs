//! A numerical laboratory for `N`-parameter, `d`-dimensional Brownian sheets.
//!
//! The crate provides the computational pieces needed to probe the
//! multiple-point structure of the Brownian sheet with finite-resolution
//! experiments:
//!
//! - [`gaussian`]: dense covariance matrices, Cholesky factorization with a
//!   bounded jitter ladder, exact multivariate normal sampling, and a generic
//!   Schur-complement conditioning oracle.
//! - [`sheet`]: the product-of-minima covariance, exact sampling at arbitrary
//!   parameter sets, a white-noise grid sampler based on rectangle partial
//!   sums, and the increment/scaling identities of the sheet.
//! - [`pinning`]: closed-form conditional expectations of the sheet inside a
//!   box given its values outside (full-corner and lower-face variants), with
//!   exact orthogonality residuals.
//! - [`girsanov`]: the decoupling drift built from lower-face interpolation,
//!   its accumulated integral, and the drift-subtracted field.
//! - [`capacity`]: Bessel–Riesz kernels, energies of discrete measures,
//!   capacity estimation by simplex-constrained energy minimization, and the
//!   critical-regime classifier.
//! - [`multipoints`]: near-multiple-point search on sampled fields, dyadic
//!   covering counts, density determinant experiments, Monte Carlo phase
//!   probabilities, and hitting-probability/capacity comparisons.
//!
//! All numeric code is generic over the scalar type through [`Scalar`]
//! (implemented for `f32` and `f64`); the aliases below fix the default
//! double-precision instantiations used by the experiment harness.

pub mod capacity;
pub mod gaussian;
pub mod girsanov;
pub mod multipoints;
pub mod num;
pub mod pinning;
pub mod rng;
pub mod sheet;

pub use num::Scalar;
pub use rng::RngStream;

/// Default scalar for experiments and the CLI harness.
pub type Real = f64;

pub type CovMatrix64 = gaussian::CovMatrix<f64>;
pub type GaussianVector64 = gaussian::GaussianVector<f64>;
pub type ParamPoint64 = sheet::ParamPoint<f64>;
pub type GridSpec64 = sheet::GridSpec<f64>;
pub type FieldSample64 = sheet::FieldSample<f64>;
pub type ParamBox64 = pinning::ParamBox<f64>;
pub type CornerWeightSet64 = pinning::CornerWeightSet<f64>;
pub type DisjointBoxFamily64 = girsanov::DisjointBoxFamily<f64>;
pub type DriftSpec64 = girsanov::DriftSpec<f64>;
pub type DiscreteMeasure64 = capacity::DiscreteMeasure<f64>;
pub type SupportCloud64 = capacity::SupportCloud<f64>;
pub type SearchConfig64 = multipoints::SearchConfig<f64>;
