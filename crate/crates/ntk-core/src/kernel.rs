//! Infinite-width kernels of deep ReLU networks.
//!
//! For inputs `x_1 … x_N` (rows of X) the limiting tangent kernel of a
//! depth-L ReLU network is built layer by layer:
//!
//! ```text
//!   G⁽¹⁾ = K⁽¹⁾ = XXᵀ
//!   G⁽ˡ⁾ᵢⱼ = 2 E[σ(u)σ(v)],   Ġ⁽ˡ⁾ᵢⱼ = 2 E[σ'(u)σ'(v)]
//!   K⁽ˡ⁾ = K⁽ˡ⁻¹⁾ ∘ Ġ⁽ˡ⁾ + G⁽ˡ⁾
//! ```
//!
//! where `(u, v)` is a centred bivariate normal with covariance read off the
//! 2x2 minor of `G⁽ˡ⁻¹⁾` at `(i, j)`, `σ` is the ReLU and `∘` the entrywise
//! product. Both expectations have arc-cosine closed forms ([`relu_dual`],
//! [`relu_deriv_dual`]); the factor 2 matches weight variance `2/width`
//! (so unit-norm directions keep unit kernel scale).
//!
//! [`limiting_ntk_monte_carlo`] estimates the same per-layer expectations by
//! sampling Gaussians through a symmetric square root of the previous layer,
//! deliberately bypassing the arc-cosine forms, and reports per-entry
//! standard errors — an independent cross-check of the analytic route.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{matrix_sqrt, rel_frobenius_distance};
use crate::rng;

/// `2 E[σ(u)σ(v)]` for `(u, v) ~ N(0, [[a², c], [c, b²]])`, passed as
/// `(a², b², c)`. Zero when either variance vanishes. The covariance must be
/// positive semidefinite up to a `1e-12` relative slack; the correlation is
/// clamped to `[-1, 1]` before the arc-cosine.
pub fn relu_dual(a_sq: f64, b_sq: f64, c: f64) -> Result<f64> {
    let rho = dual_correlation(a_sq, b_sq, c)?;
    let ab = (a_sq * b_sq).sqrt();
    if ab == 0.0 {
        return Ok(0.0);
    }
    let theta = rho.acos();
    Ok(ab / std::f64::consts::PI * ((1.0 - rho * rho).max(0.0).sqrt() + rho * (std::f64::consts::PI - theta)))
}

/// `2 E[σ'(u)σ'(v)]` for the same bivariate normal, with `σ'(0) = 0`, so the
/// value is 0 whenever either variance vanishes (the variable is almost
/// surely 0 only when its variance is 0, where the derivative convention
/// bites).
pub fn relu_deriv_dual(a_sq: f64, b_sq: f64, c: f64) -> Result<f64> {
    let rho = dual_correlation(a_sq, b_sq, c)?;
    if a_sq * b_sq == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - rho.acos() / std::f64::consts::PI)
}

/// Validate the covariance triple and return the clamped correlation.
fn dual_correlation(a_sq: f64, b_sq: f64, c: f64) -> Result<f64> {
    if !a_sq.is_finite() || !b_sq.is_finite() || !c.is_finite() {
        return Err(Error::invalid("dual kernel inputs must be finite"));
    }
    if a_sq < 0.0 || b_sq < 0.0 {
        return Err(Error::invalid(format!("variances must be >= 0, got ({a_sq}, {b_sq})")));
    }
    let ab = (a_sq * b_sq).sqrt();
    if c.abs() > ab * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "covariance ({a_sq}, {b_sq}, {c}) is not positive semidefinite"
        )));
    }
    if ab == 0.0 {
        Ok(0.0)
    } else {
        Ok((c / ab).clamp(-1.0, 1.0))
    }
}

/// Per-layer kernels of the infinite-width recursion.
///
/// Layer indices are 1-based as in the recursion: `conjugate[l-1]` is
/// `G⁽ˡ⁾` for `l = 1..=L`, `derivative[l-2]` is `Ġ⁽ˡ⁾` for `l = 2..=L`,
/// `ntk[l-1]` is `K⁽ˡ⁾`. All matrices are exactly symmetric; conjugate
/// diagonals equal `‖xᵢ‖²` at every layer and derivative diagonals are 1
/// (0 for a zero-norm input, whose kernel column is identically 0).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStack {
    pub conjugate: Vec<DMatrix<f64>>,
    pub derivative: Vec<DMatrix<f64>>,
    pub ntk: Vec<DMatrix<f64>>,
}

impl KernelStack {
    /// Network depth L (number of layers in the recursion).
    pub fn depth(&self) -> usize {
        self.ntk.len()
    }

    /// Number of input points N.
    pub fn n_points(&self) -> usize {
        self.ntk[0].nrows()
    }

    /// `G⁽ˡ⁾`, 1-based.
    pub fn conjugate_at(&self, layer: usize) -> &DMatrix<f64> {
        &self.conjugate[layer - 1]
    }

    /// `Ġ⁽ˡ⁾`, 1-based, defined for `2 <= layer <= L`.
    pub fn derivative_at(&self, layer: usize) -> &DMatrix<f64> {
        &self.derivative[layer - 2]
    }

    /// `K⁽ˡ⁾`, 1-based.
    pub fn ntk_at(&self, layer: usize) -> &DMatrix<f64> {
        &self.ntk[layer - 1]
    }

    /// `K⁽ᴸ⁾` — the depth-L tangent kernel.
    pub fn final_ntk(&self) -> &DMatrix<f64> {
        self.ntk.last().expect("stack is never empty")
    }
}

fn validate_inputs(x: &DMatrix<f64>, depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::shape("input matrix must be non-empty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("input matrix has non-finite entries"));
    }
    Ok(())
}

/// Exact limiting tangent kernel of a depth-`depth` ReLU network on the rows
/// of `x`, with every intermediate layer retained.
///
/// The result is checked against the unrolled form
/// `K⁽ᴸ⁾ = G⁽ᴸ⁾ + Σ_{l<L} G⁽ˡ⁾ ∘ Ġ⁽ˡ⁺¹⁾ ∘ … ∘ Ġ⁽ᴸ⁾` to a relative Frobenius
/// tolerance of 1e-10 before returning.
pub fn limiting_ntk(x: &DMatrix<f64>, depth: usize) -> Result<KernelStack> {
    validate_inputs(x, depth)?;
    let n = x.nrows();
    let g1 = x * x.transpose();

    let mut conjugate = vec![g1.clone()];
    let mut derivative: Vec<DMatrix<f64>> = Vec::new();
    let mut ntk = vec![g1.clone()];

    for _ in 2..=depth {
        let prev = conjugate.last().expect("layer 1 present");
        let mut g = DMatrix::zeros(n, n);
        let mut gdot = DMatrix::zeros(n, n);
        for i in 0..n {
            // Diagonal minors are rank one: the dual kernels reduce to the
            // variance itself and to 1, exactly; 0-variance rows stay 0.
            g[(i, i)] = prev[(i, i)];
            gdot[(i, i)] = if prev[(i, i)] > 0.0 { 1.0 } else { 0.0 };
            for j in 0..i {
                let (a_sq, b_sq, c) = (prev[(i, i)], prev[(j, j)], prev[(i, j)]);
                let gv = relu_dual(a_sq, b_sq, c)?;
                let dv = relu_deriv_dual(a_sq, b_sq, c)?;
                g[(i, j)] = gv;
                g[(j, i)] = gv;
                gdot[(i, j)] = dv;
                gdot[(j, i)] = dv;
            }
        }
        let k = ntk.last().expect("layer 1 present").component_mul(&gdot) + &g;
        conjugate.push(g);
        derivative.push(gdot);
        ntk.push(k);
    }

    let stack = KernelStack { conjugate, derivative, ntk };
    let unrolled = unrolled_final_ntk(&stack);
    let dist = rel_frobenius_distance(&unrolled, stack.final_ntk());
    if dist > 1e-10 {
        return Err(Error::numerical(format!(
            "rolled and unrolled kernel assemblies disagree: relative distance {dist:.3e}"
        )));
    }
    Ok(stack)
}

/// `G⁽ᴸ⁾ + Σ_{l=1}^{L-1} G⁽ˡ⁾ ∘ Ġ⁽ˡ⁺¹⁾ ∘ … ∘ Ġ⁽ᴸ⁾`, assembled from the
/// stored layers with suffix products of the derivative kernels.
pub fn unrolled_final_ntk(stack: &KernelStack) -> DMatrix<f64> {
    let depth = stack.depth();
    let n = stack.n_points();
    let mut acc = stack.conjugate_at(depth).clone();
    let mut suffix = DMatrix::from_element(n, n, 1.0);
    for l in (1..depth).rev() {
        suffix.component_mul_assign(stack.derivative_at(l + 1));
        acc += stack.conjugate_at(l).component_mul(&suffix);
    }
    acc
}

/// Monte Carlo estimate of a [`KernelStack`] with per-entry standard errors.
///
/// Index layout matches [`KernelStack`]; `conjugate_se[0]` is zero because
/// layer 1 is the exact Gram.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloKernelStack {
    pub conjugate: Vec<DMatrix<f64>>,
    pub conjugate_se: Vec<DMatrix<f64>>,
    pub derivative: Vec<DMatrix<f64>>,
    pub derivative_se: Vec<DMatrix<f64>>,
    pub ntk: Vec<DMatrix<f64>>,
    pub num_samples: usize,
}

impl MonteCarloKernelStack {
    pub fn depth(&self) -> usize {
        self.ntk.len()
    }

    pub fn final_ntk(&self) -> &DMatrix<f64> {
        self.ntk.last().expect("stack is never empty")
    }
}

/// Samples are drawn in chunks of this size; each chunk has its own derived
/// seed and the chunk sums are reduced in index order, so the estimate is
/// identical for any thread count.
const MC_CHUNK: usize = 8192;

struct ChunkSums {
    /// Σ v and Σ v² for v = 2σ(uᵢ)σ(uⱼ).
    g1: DMatrix<f64>,
    g2: DMatrix<f64>,
    /// Σ w and Σ w² for w = 2σ'(uᵢ)σ'(uⱼ).
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
}

/// One chunk of the layer-l expectation: `u = B·w` with `w` standard normal,
/// accumulated on the upper triangle.
fn mc_chunk(b: &DMatrix<f64>, seed: u64, chunk_index: u64, samples: usize) -> ChunkSums {
    let n = b.nrows();
    let p = b.ncols();
    let mut rng = rng::substream(seed, "mc-chunk", chunk_index);
    let mut w = DVector::zeros(p);
    let mut u = DVector::zeros(n);
    let mut sums = ChunkSums {
        g1: DMatrix::zeros(n, n),
        g2: DMatrix::zeros(n, n),
        d1: DMatrix::zeros(n, n),
        d2: DMatrix::zeros(n, n),
    };
    for _ in 0..samples {
        for t in 0..p {
            w[t] = rand::Rng::sample(&mut rng, StandardNormal);
        }
        b.mul_to(&w, &mut u);
        for i in 0..n {
            let (si, ti) = (u[i].max(0.0), f64::from(u[i] > 0.0));
            for j in i..n {
                let v = 2.0 * si * u[j].max(0.0);
                sums.g1[(i, j)] += v;
                sums.g2[(i, j)] += v * v;
                let w2 = 2.0 * ti * f64::from(u[j] > 0.0);
                sums.d1[(i, j)] += w2;
                sums.d2[(i, j)] += w2 * w2;
            }
        }
    }
    sums
}

/// Turn triangular sums into a symmetric `(mean, standard error)` pair.
fn mean_and_se(s1: &DMatrix<f64>, s2: &DMatrix<f64>, n_samples: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = s1.nrows();
    let m = n_samples as f64;
    let mut mean = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mu = s1[(i, j)] / m;
            let var = ((s2[(i, j)] - s1[(i, j)] * s1[(i, j)] / m) / (m - 1.0)).max(0.0);
            let e = (var / m).sqrt();
            mean[(i, j)] = mu;
            mean[(j, i)] = mu;
            se[(i, j)] = e;
            se[(j, i)] = e;
        }
    }
    (mean, se)
}

/// Monte Carlo route to the limiting kernel: per layer, the defining
/// expectations are sampled through the exact previous-layer kernel (layer 2
/// samples `u = Xw`; deeper layers sample `u = √G⁽ˡ⁻¹⁾ w`), so each layer's
/// standard errors are valid in isolation and the arc-cosine forms are never
/// consulted.
pub fn limiting_ntk_monte_carlo(
    x: &DMatrix<f64>,
    depth: usize,
    num_samples: usize,
    seed: u64,
) -> Result<MonteCarloKernelStack> {
    validate_inputs(x, depth)?;
    if num_samples < 2 {
        return Err(Error::invalid("Monte Carlo needs at least 2 samples"));
    }
    let n = x.nrows();
    let g1 = x * x.transpose();
    let exact = limiting_ntk(x, depth)?;

    let mut conjugate = vec![g1.clone()];
    let mut conjugate_se = vec![DMatrix::zeros(n, n)];
    let mut derivative = Vec::new();
    let mut derivative_se = Vec::new();
    let mut ntk = vec![g1];

    for layer in 2..=depth {
        // The sampling operator: X reproduces N(0, G⁽¹⁾) directly; deeper
        // layers need a square root of the exact previous kernel.
        let b = if layer == 2 {
            x.clone()
        } else {
            matrix_sqrt(exact.conjugate_at(layer - 1), layer - 1)?
        };
        let layer_seed = rng::derive_seed(seed, "mc-layer", layer as u64);
        let n_chunks = num_samples.div_ceil(MC_CHUNK);
        let sums = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let take = MC_CHUNK.min(num_samples - c * MC_CHUNK);
                mc_chunk(&b, layer_seed, c as u64, take)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .reduce(|mut acc, s| {
                acc.g1 += s.g1;
                acc.g2 += s.g2;
                acc.d1 += s.d1;
                acc.d2 += s.d2;
                acc
            })
            .expect("at least one chunk");

        let (g, g_se) = mean_and_se(&sums.g1, &sums.g2, num_samples);
        let (gdot, gdot_se) = mean_and_se(&sums.d1, &sums.d2, num_samples);
        let k = ntk.last().expect("layer 1 present").component_mul(&gdot) + &g;
        conjugate.push(g);
        conjugate_se.push(g_se);
        derivative.push(gdot);
        derivative_se.push(gdot_se);
        ntk.push(k);
    }

    Ok(MonteCarloKernelStack {
        conjugate,
        conjugate_se,
        derivative,
        derivative_se,
        ntk,
        num_samples,
    })
}
