//! Seeded input ensembles.
//!
//! A dataset is an `N x d` matrix whose rows are the samples. Three
//! distributions are supported: standard Gaussian entries, the sphere of
//! radius √d (a normalised Gaussian, so every row has norm exactly √d), and
//! the ±1 hypercube. All three keep ‖xᵢ‖² ≈ d, which is the normalisation
//! the kernel scaling results assume.
//!
//! Row `i` is drawn from its own child stream derived from `(seed,
//! "data-sample", i)`, so a sample's values depend only on the root seed and
//! its index — not on how many other samples are drawn.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Input distribution for [`sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// I.i.d. standard normal entries.
    Gaussian,
    /// Uniform on the sphere of radius √d (Gaussian direction, exact norm).
    Sphere,
    /// Uniform on {-1, +1}^d.
    Hypercube,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Sphere => "sphere",
            Distribution::Hypercube => "hypercube",
        }
    }
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            "sphere" => Ok(Distribution::Sphere),
            "hypercube" => Ok(Distribution::Hypercube),
            other => Err(Error::invalid(format!(
                "unknown distribution '{other}' (expected gaussian|sphere|hypercube)"
            ))),
        }
    }
}

/// What to sample: distribution, sample count, ambient dimension, root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataSpec {
    pub distribution: Distribution,
    pub n_samples: usize,
    pub dimension: usize,
    pub seed: u64,
}

impl DataSpec {
    pub fn new(distribution: Distribution, n_samples: usize, dimension: usize, seed: u64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        if dimension == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(DataSpec { distribution, n_samples, dimension, seed })
    }
}

/// Sample matrix type: rows are samples, columns are input coordinates.
pub type DataMatrix = DMatrix<f64>;

/// Draw the `N x d` sample matrix described by `spec`.
pub fn sample(spec: &DataSpec) -> Result<DataMatrix> {
    DataSpec::new(spec.distribution, spec.n_samples, spec.dimension, spec.seed)?;
    let (n, d) = (spec.n_samples, spec.dimension);
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut stream = rng::substream(spec.seed, "data-sample", i as u64);
        match spec.distribution {
            Distribution::Gaussian => {
                for j in 0..d {
                    x[(i, j)] = stream.sample(StandardNormal);
                }
            }
            Distribution::Sphere => {
                let sqrt_d = (d as f64).sqrt();
                loop {
                    let mut norm_sq = 0.0;
                    for j in 0..d {
                        let g: f64 = stream.sample(StandardNormal);
                        x[(i, j)] = g;
                        norm_sq += g * g;
                    }
                    // A zero draw cannot be normalised; redraw from the same
                    // stream (probability ~0, but keeps the map total).
                    if norm_sq > 0.0 {
                        let scale = sqrt_d / norm_sq.sqrt();
                        for j in 0..d {
                            x[(i, j)] *= scale;
                        }
                        break;
                    }
                }
            }
            Distribution::Hypercube => {
                for j in 0..d {
                    x[(i, j)] = if stream.gen::<bool>() { 1.0 } else { -1.0 };
                }
            }
        }
    }
    Ok(x)
}

/// Norm and inner-product diagnostics of a sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    /// Mean row norm `(1/N) Σ ‖xᵢ‖`.
    pub mean_norm: f64,
    /// Mean squared row norm `(1/N) Σ ‖xᵢ‖²`.
    pub mean_sq_norm: f64,
    /// Mean squared distance to the empirical mean row.
    pub centered_sq_norm: f64,
    /// `max_{i≠j} |⟨xᵢ, xⱼ⟩|`; absent when there is a single sample.
    pub max_abs_offdiag_inner: Option<f64>,
}

/// Compute the [`ScalingReport`] of a sample matrix.
pub fn data_scaling_report(x: &DataMatrix) -> Result<ScalingReport> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::shape("scaling report needs a non-empty matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("sample matrix has non-finite entries"));
    }

    let mut mean_norm = 0.0;
    let mut mean_sq = 0.0;
    for i in 0..n {
        let sq = x.row(i).norm_squared();
        mean_sq += sq;
        mean_norm += sq.sqrt();
    }
    mean_norm /= n as f64;
    mean_sq /= n as f64;

    let mean_row = x.row_sum() / n as f64;
    let mut centered = 0.0;
    for i in 0..n {
        centered += (x.row(i) - &mean_row).norm_squared();
    }
    centered /= n as f64;

    let max_offdiag = if n < 2 {
        None
    } else {
        let gram = x * x.transpose();
        let mut m = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                m = m.max(gram[(i, j)].abs());
            }
        }
        Some(m)
    };

    Ok(ScalingReport {
        mean_norm,
        mean_sq_norm: mean_sq,
        centered_sq_norm: centered,
        max_abs_offdiag_inner: max_offdiag,
    })
}
