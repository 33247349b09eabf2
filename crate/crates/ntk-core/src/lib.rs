//! Limiting and empirical neural tangent kernels (NTK) for fully connected
//! ReLU networks, together with the spectral certificates that bound their
//! smallest eigenvalues.
//!
//! The crate is organised around the objects it computes:
//!
//! - [`data`]: seeded input ensembles (Gaussian, rescaled sphere, hypercube)
//!   and scaling diagnostics.
//! - [`net`]: finite-width ReLU networks — architectures, weight
//!   initialisation, forward traces, feature matrices.
//! - [`kernel`]: the infinite-width NTK built layer by layer from the
//!   arc-cosine closed forms, plus a Monte Carlo estimator of the same
//!   recursion used as an independent cross-check.
//! - [`hermite`]: Hermite coefficients of the ReLU, the Hermite series of the
//!   ReLU dual kernel, Khatri–Rao row powers and Gershgorin bounds on their
//!   Grams.
//! - [`empirical`]: exact finite-width NTK via weight Jacobians, its layerwise
//!   Hadamard decomposition, and kernel-regression fits.
//! - [`bounds`]: certified lower/upper bounds for both kernels, width-scaling
//!   expressions, and Lipschitz estimates for the network map.
//!
//! All randomness flows through [`rng`]: a stream-cipher generator with child
//! seeds derived by hashing, so every result is reproducible bit for bit from
//! a single root seed, independent of platform or thread count.

pub mod bounds;
pub mod data;
pub mod empirical;
pub mod error;
pub mod hermite;
pub mod kernel;
pub mod linalg;
pub mod net;
pub mod rng;

pub use error::{Error, Result};
