//! The finite-width (empirical) tangent kernel.
//!
//! For a network `f` with weights `W_1 … W_L`, the Jacobian row of a sample
//! x stacks `∂f(x)/∂vec(W_l)` over layers. Each layer block has outer-product
//! structure: with `δ_l(x)` the gradient of the output with respect to the
//! layer-l pre-activation,
//!
//! ```text
//!   ∂f(x)/∂vec(W_l) = vec(f_{l-1}(x) · δ_l(x)ᵀ)
//! ```
//!
//! (column-major vec, so the input index varies fastest). The empirical
//! kernel is the Jacobian Gram `K̄ = JJᵀ`, and grouping the inner products
//! layer by layer yields the exact Hadamard decomposition
//!
//! ```text
//!   K̄ = Σ_{k=0}^{L-1}  F_k F_kᵀ ∘ B_{k+1} B_{k+1}ᵀ
//! ```
//!
//! with `F_k` the layer-k feature matrix and `B_{k+1}` the backward-vector
//! matrix of [`backward_vectors`]. Scaling every hidden width by the factor
//! `2/n_l` ([`normalized_ntk`]) puts `K̄` on the same scale as the
//! infinite-width kernel of [`crate::kernel`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigendecomposition;
use crate::net::{batch_forward, Architecture, ForwardTrace, WeightSet};

/// Per-layer Jacobian blocks of a batch. `block(l)` has one row per sample
/// and `n_{l-1}·n_l` columns ordered column-major over `W_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    arch: Architecture,
    blocks: Vec<DMatrix<f64>>,
}

impl JacobianBlocks {
    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Block for layer l, 1-based.
    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        &self.blocks[l - 1]
    }

    pub fn n_samples(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Total parameter count Σ n_{l-1} n_l.
    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.ncols()).sum()
    }
}

/// Output gradients with respect to each pre-activation: `δ_L = [1]`, and
/// `δ_l = Σ_l W_{l+1} δ_{l+1}` walking backwards (Σ_l the 0/1 ReLU diagonal).
/// Entry `l-1` of the result is `δ_l`.
fn output_gradients(weights: &WeightSet, trace: &ForwardTrace) -> Vec<DVector<f64>> {
    let depth = weights.depth();
    let mut deltas = vec![DVector::zeros(0); depth];
    deltas[depth - 1] = DVector::from_element(1, 1.0);
    for l in (1..depth).rev() {
        let propagated = weights.layer(l + 1) * &deltas[l];
        deltas[l - 1] = propagated.component_mul(trace.activation_diag(l));
    }
    deltas
}

/// Jacobian of the batch outputs with respect to every weight, one block per
/// layer.
pub fn jacobian(weights: &WeightSet, x: &DMatrix<f64>) -> Result<JacobianBlocks> {
    let (_, traces) = batch_forward(weights, x)?;
    let n = x.nrows();
    let depth = weights.depth();
    let arch = weights.architecture();
    let mut blocks: Vec<DMatrix<f64>> =
        (1..=depth).map(|l| DMatrix::zeros(n, arch.width(l - 1) * arch.width(l))).collect();
    for (i, trace) in traces.iter().enumerate() {
        let deltas = output_gradients(weights, trace);
        for l in 1..=depth {
            let f_prev = trace.feature(l - 1);
            let delta = &deltas[l - 1];
            let rows = f_prev.len();
            let block = &mut blocks[l - 1];
            for (j, &dj) in delta.iter().enumerate() {
                for (r, &fr) in f_prev.iter().enumerate() {
                    block[(i, j * rows + r)] = fr * dj;
                }
            }
        }
    }
    Ok(JacobianBlocks { arch: arch.clone(), blocks })
}

/// `K̄ = JJᵀ`, summed block by block. Exactly symmetric by construction.
pub fn empirical_ntk(j: &JacobianBlocks) -> DMatrix<f64> {
    let n = j.n_samples();
    let mut k = DMatrix::zeros(n, n);
    for b in &j.blocks {
        k += b * b.transpose();
    }
    k
}

/// The backward-vector matrix `B_k` of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardVectors {
    /// Layer index k in `0..=L`.
    pub layer: usize,
    /// One row per sample. For `k` in `[0, L-1]` row i is
    /// `Σ_k(x_i) (Π_{l=k+1}^{L-1} W_l Σ_l(x_i)) W_L` (with `Σ_0 = I`, the
    /// input layer having no activation); for `k = L` every row is
    /// `1_N/√N`, making `B_L B_Lᵀ` the all-ones matrix.
    pub rows: DMatrix<f64>,
}

/// Backward vectors for layer `k` of every sample in the traced batch.
pub fn backward_vectors(
    weights: &WeightSet,
    traces: &[ForwardTrace],
    k: usize,
) -> Result<BackwardVectors> {
    let depth = weights.depth();
    let n = traces.len();
    if n == 0 {
        return Err(Error::shape("backward vectors need at least one trace"));
    }
    if k > depth {
        return Err(Error::invalid(format!("layer {k} out of range (have 0..={depth})")));
    }
    if k == depth {
        let value = 1.0 / (n as f64).sqrt();
        return Ok(BackwardVectors { layer: k, rows: DMatrix::from_element(n, n, value) });
    }
    let width = weights.architecture().width(k);
    let mut rows = DMatrix::zeros(n, width);
    for (i, trace) in traces.iter().enumerate() {
        let deltas = output_gradients(weights, trace);
        let v = if k == 0 {
            // No input activation: fold the first weight layer in directly.
            weights.layer(1) * &deltas[0]
        } else {
            deltas[k - 1].clone()
        };
        rows.row_mut(i).copy_from(&v.transpose());
    }
    Ok(BackwardVectors { layer: k, rows })
}

/// The layerwise Hadamard split of the empirical kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `terms[k] = F_k F_kᵀ ∘ B_{k+1} B_{k+1}ᵀ` for `k = 0..=L-1`.
    pub terms: Vec<DMatrix<f64>>,
    /// Sum of the terms; agrees with `empirical_ntk(jacobian(..))` to
    /// rounding.
    pub reconstruction: DMatrix<f64>,
}

/// Compute the decomposition directly from features and backward vectors,
/// without materialising the Jacobian.
pub fn layerwise_decomposition(weights: &WeightSet, x: &DMatrix<f64>) -> Result<Decomposition> {
    let (features, traces) = batch_forward(weights, x)?;
    let n = x.nrows();
    let depth = weights.depth();
    let mut terms = Vec::with_capacity(depth);
    let mut reconstruction = DMatrix::zeros(n, n);
    for k in 0..depth {
        let f = features.layer(k);
        let b = backward_vectors(weights, &traces, k + 1)?;
        let term = (f * f.transpose()).component_mul(&(&b.rows * b.rows.transpose()));
        reconstruction += &term;
        terms.push(term);
    }
    Ok(Decomposition { terms, reconstruction })
}

/// Rescale an empirical kernel by `Π_{l=1}^{L-1} 2/n_l` — the width
/// normalisation under which it converges to the infinite-width kernel when
/// the weights are drawn with unit variance.
pub fn normalized_ntk(kbar: &DMatrix<f64>, widths: &[usize]) -> Result<DMatrix<f64>> {
    if widths.len() < 2 {
        return Err(Error::invalid("need at least an input and an output layer"));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::invalid("all widths must be at least 1"));
    }
    let factor: f64 = widths[1..widths.len() - 1].iter().map(|&w| 2.0 / w as f64).product();
    Ok(kbar * factor)
}

/// Result of a linearised (kernel) least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// `‖Jθ - y‖` at the returned solution.
    pub residual_norm: f64,
    /// `‖θ‖` of the minimum-norm least-squares solution.
    pub solution_norm: f64,
}

/// Minimum-norm least squares for `Jθ = y` in the kernel form: solve
/// `K̄α = y` through a spectrally truncated pseudo-inverse (eigenvalues
/// below `(1e-10)²·λ_max` are treated as zero, matching a 1e-10 relative
/// cut on singular values of J) and set `θ = Jᵀα`.
pub fn linearized_fit(j: &JacobianBlocks, y: &DVector<f64>) -> Result<FitReport> {
    let n = j.n_samples();
    if y.len() != n {
        return Err(Error::shape(format!("targets have length {}, batch has {n} samples", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("targets contain non-finite entries"));
    }
    let kbar = empirical_ntk(j);
    let (vals, vecs) = sym_eigendecomposition(&kbar)?;
    let lam_max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cut = 1e-20 * lam_max;
    let mut alpha = DVector::zeros(n);
    for idx in 0..vals.len() {
        let lam = vals[idx];
        if lam > cut {
            let v = vecs.column(idx);
            alpha += v * (v.dot(y) / lam);
        }
    }
    let residual_norm = (&kbar * &alpha - y).norm();
    let mut solution_sq = 0.0;
    for b in &j.blocks {
        solution_sq += (b.transpose() * &alpha).norm_squared();
    }
    Ok(FitReport { residual_norm, solution_norm: solution_sq.sqrt() })
}
