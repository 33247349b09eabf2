//! Computable spectral certificates and scaling expressions.
//!
//! Two kinds of quantity live here and are kept strictly apart by type:
//!
//! * [`BoundReport`] — certificates that provably sandwich a smallest
//!   eigenvalue in exact arithmetic. Lower routes for the infinite-width
//!   kernel combine per-layer Schur complements with a Hermite–Gershgorin
//!   chain; lower routes for the finite-width kernel sum layerwise
//!   Hadamard-product bounds; upper routes use traces and diagonal entries.
//! * [`ScalingExpression`] — structural width/variance formulas with all
//!   absolute constants set to 1. These are *not* bounds; they exist so
//!   sweeps can test ratio stability against measured spectra.
//!
//! The Lipschitz estimators at the bottom sit in between: the sampled
//! estimate is exact for the first layer and a lower estimate beyond it,
//! while the operator-norm product is always an upper bound.

use nalgebra::DMatrix;
use rayon::prelude::*;
use std::str::FromStr;

use crate::data::{sample, DataSpec};
use crate::empirical::backward_vectors;
use crate::error::{Error, Result};
use crate::hermite::{gershgorin_bounds, hermite_coeff_relu, khatri_rao_gram, GershgorinVariant};
use crate::kernel::limiting_ntk;
use crate::linalg::{operator_norm, smallest_eigenvalue};
use crate::net::{batch_forward, forward, Architecture, WeightSet};

/// Which side of the spectrum a certificate controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// A certificate value together with the named intermediate scalars that
/// produced it. Ingredient order is fixed by construction, so reports are
/// reproducible run to run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub side: Side,
    pub value: f64,
    pub ingredients: Vec<(String, f64)>,
}

impl BoundReport {
    /// Look up an ingredient by name.
    pub fn ingredient(&self, name: &str) -> Option<f64> {
        self.ingredients.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }
}

fn row_norms_sq(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.nrows()).map(|i| x.row(i).norm_squared()).collect()
}

/// Certified lower bound on the smallest eigenvalue of the depth-`depth`
/// infinite-width kernel of `x`. Returns the better of two routes, both
/// recorded in the ingredients:
///
/// * `schur_sum` — the kernel dominates each conjugate layer in the
///   semidefinite order, so `Σ_l λ_min(G⁽ˡ⁾)` is a valid floor;
/// * `hermite_route` — `λ_min(G⁽¹⁾)` plus `(depth-1)` copies of the
///   analytic per-layer floor `[μ_r² · gershgorin_lower(X, r) /
///   max_i ‖x_i‖^{2(r-1)}]₊` that needs no kernel eigensolves at all.
///
/// `r` is the (even) order of the Hermite coefficient used by the second
/// route.
pub fn certified_lower_bound_limiting(
    x: &DMatrix<f64>,
    depth: usize,
    r: usize,
) -> Result<BoundReport> {
    if r < 2 || r % 2 != 0 {
        return Err(Error::invalid(format!("Hermite order must be even and >= 2, got {r}")));
    }
    let norms = row_norms_sq(x);
    if norms.iter().any(|&n| n == 0.0) {
        return Err(Error::invalid("lower-bound certificate needs every data row nonzero"));
    }
    let stack = limiting_ntk(x, depth)?;
    let mut ingredients = Vec::new();
    let mut schur_sum = 0.0;
    let mut lambda_g1 = 0.0;
    for l in 1..=depth {
        let lam = smallest_eigenvalue(stack.conjugate_at(l))?;
        if l == 1 {
            lambda_g1 = lam;
        }
        ingredients.push((format!("lambda_min_g{l}"), lam));
        schur_sum += lam;
    }
    ingredients.push(("schur_sum".to_string(), schur_sum));

    let (gersh_lower, _) = gershgorin_bounds(x, r, GershgorinVariant::default())?;
    let mu_sq = hermite_coeff_relu(r).powi(2);
    let max_norm_sq = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let per_layer_floor = (mu_sq * gersh_lower / max_norm_sq.powi(r as i32 - 1)).max(0.0);
    let hermite_route = lambda_g1 + (depth - 1) as f64 * per_layer_floor;
    ingredients.push(("gershgorin_lower".to_string(), gersh_lower));
    ingredients.push(("mu_r_sq".to_string(), mu_sq));
    ingredients.push(("max_row_norm_sq".to_string(), max_norm_sq));
    ingredients.push(("per_layer_floor".to_string(), per_layer_floor));
    ingredients.push(("hermite_route".to_string(), hermite_route));

    Ok(BoundReport {
        name: "limiting_lower",
        side: Side::Lower,
        value: schur_sum.max(hermite_route),
        ingredients,
    })
}

/// Upper bound `tr(K⁽ᴸ⁾)/N = (L/N)·Σ_i ‖x_i‖²` on the smallest eigenvalue
/// of the infinite-width kernel — exact because the kernel diagonal is
/// `L‖x_i‖²` identically.
pub fn trace_upper_bound_limiting(x: &DMatrix<f64>, depth: usize) -> Result<BoundReport> {
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::shape("data matrix must be nonempty"));
    }
    let sum_sq: f64 = row_norms_sq(x).iter().sum();
    let n = x.nrows() as f64;
    let trace = depth as f64 * sum_sq;
    Ok(BoundReport {
        name: "limiting_trace_upper",
        side: Side::Upper,
        value: trace / n,
        ingredients: vec![("trace".to_string(), trace), ("n_samples".to_string(), n)],
    })
}

/// Certified lower bound on `λ_min(JJᵀ)` for a concrete weight draw:
/// since each layerwise term is a Hadamard product of two Grams,
/// `λ_min(P∘Q) ≥ λ_min(P)·min_i Q_ii` applies term by term, giving
///
/// ```text
///   λ_min(JJᵀ) ≥ Σ_{k=0}^{L-1} λ_min(F_k F_kᵀ) · min_i ‖(B_{k+1})_i‖²
/// ```
pub fn certified_lower_bound_empirical(weights: &WeightSet, x: &DMatrix<f64>) -> Result<BoundReport> {
    let (features, traces) = batch_forward(weights, x)?;
    let depth = weights.depth();
    let n = x.nrows();
    let mut ingredients = Vec::new();
    let mut value = 0.0;
    for k in 0..depth {
        let f = features.layer(k);
        let lam = smallest_eigenvalue(&(f * f.transpose()))?;
        let b = backward_vectors(weights, &traces, k + 1)?;
        let min_b = (0..n)
            .map(|i| b.rows.row(i).norm_squared())
            .fold(f64::INFINITY, f64::min);
        let term = lam * min_b;
        ingredients.push((format!("lambda_min_f{k}"), lam));
        ingredients.push((format!("min_b_norm_sq_{}", k + 1), min_b));
        ingredients.push((format!("term_{k}"), term));
        value += term;
    }
    Ok(BoundReport { name: "empirical_layerwise_lower", side: Side::Lower, value, ingredients })
}

/// Upper bound `λ_min(JJᵀ) ≤ (JJᵀ)₁₁ = Σ_k ‖(F_k)₁‖²·‖(B_{k+1})₁‖²`,
/// evaluated through the layerwise split rather than the full Jacobian.
pub fn upper_bound_empirical(weights: &WeightSet, x: &DMatrix<f64>) -> Result<BoundReport> {
    let (features, traces) = batch_forward(weights, x)?;
    let depth = weights.depth();
    let mut ingredients = Vec::new();
    let mut value = 0.0;
    for k in 0..depth {
        let f_sq = features.layer(k).row(0).norm_squared();
        let b = backward_vectors(weights, &traces, k + 1)?;
        let b_sq = b.rows.row(0).norm_squared();
        let term = f_sq * b_sq;
        ingredients.push((format!("term_{k}"), term));
        value += term;
    }
    Ok(BoundReport { name: "empirical_first_entry_upper", side: Side::Upper, value, ingredients })
}

/// Lower bound on `λ_min(E_w[σ(Fw)σ(Fw)ᵀ])`, the expected Gram of the
/// next layer's activations when the layer's weights have variance
/// `beta_next_sq`:
///
/// ```text
///   λ_min ≥ β² · μ_r² · λ_min((F^{*r})(F^{*r})ᵀ) / max_i ‖F_i‖^{2(r-1)}
/// ```
///
/// The Khatri–Rao Gram eigenvalue is used directly; the cheaper Gershgorin
/// floor for it is reported alongside in the ingredients.
pub fn feature_gram_bound(f: &DMatrix<f64>, beta_next_sq: f64, r: usize) -> Result<BoundReport> {
    if r < 2 || r % 2 != 0 {
        return Err(Error::invalid(format!("Hermite order must be even and >= 2, got {r}")));
    }
    if !(beta_next_sq.is_finite() && beta_next_sq > 0.0) {
        return Err(Error::invalid("weight variance must be positive and finite"));
    }
    let norms = row_norms_sq(f);
    if norms.iter().any(|&n| n == 0.0) {
        return Err(Error::invalid(
            "feature Gram bound needs nonzero rows (the norm scaling divides by them)",
        ));
    }
    let kr = khatri_rao_gram(f, r)?;
    let lam_kr = smallest_eigenvalue(&kr.gram)?;
    let (gersh_lower, _) = gershgorin_bounds(f, r, GershgorinVariant::default())?;
    let mu_sq = hermite_coeff_relu(r).powi(2);
    let max_norm_sq = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom = max_norm_sq.powi(r as i32 - 1);
    let value = beta_next_sq * mu_sq * lam_kr / denom;
    let surrogate = beta_next_sq * mu_sq * gersh_lower / denom;
    Ok(BoundReport {
        name: "feature_gram_lower",
        side: Side::Lower,
        value,
        ingredients: vec![
            ("lambda_min_khatri_rao".to_string(), lam_kr),
            ("gershgorin_lower".to_string(), gersh_lower),
            ("gershgorin_surrogate".to_string(), surrogate),
            ("mu_r_sq".to_string(), mu_sq),
            ("max_row_norm_sq".to_string(), max_norm_sq),
        ],
    })
}

/// Structural formula selector for [`scaling_expression`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaId {
    /// Infinite-width smallest eigenvalue scale: `d`.
    Limiting,
    /// Finite-width lower scale with wide-layer gating:
    /// `μ_r²·d·Πn_l·Πβ_l²·Σ_l ξ_{l-1}β_l^{-2}`.
    FiniteWidthLower,
    /// Finite-width upper scale: same products with the ungated sum
    /// `Σ_l β_l^{-2}`.
    FiniteWidthUpper,
    /// Scale of `σ_min(F_k)²` for the layer-k feature matrix:
    /// `d·Π_{l≤k} n_l β_l²`.
    FeatureSingularValue,
    /// Scale of the squared Lipschitz constant of the layer-k
    /// pre-activation map:
    /// `(Π_{l≤k} n_l / min_{l≤k} n_l)·Π_{l<k} ln(n_l)·Π_{l≤k} β_l²`.
    LipschitzScaling,
}

impl FormulaId {
    pub fn name(self) -> &'static str {
        match self {
            FormulaId::Limiting => "limiting",
            FormulaId::FiniteWidthLower => "finite_width_lower",
            FormulaId::FiniteWidthUpper => "finite_width_upper",
            FormulaId::FeatureSingularValue => "feature_singular_value",
            FormulaId::LipschitzScaling => "lipschitz_scaling",
        }
    }
}

impl FromStr for FormulaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "limiting" => Ok(FormulaId::Limiting),
            "finite_width_lower" => Ok(FormulaId::FiniteWidthLower),
            "finite_width_upper" => Ok(FormulaId::FiniteWidthUpper),
            "feature_singular_value" => Ok(FormulaId::FeatureSingularValue),
            "lipschitz_scaling" => Ok(FormulaId::LipschitzScaling),
            other => Err(Error::invalid(format!(
                "unknown formula '{other}' (expected limiting|finite_width_lower|finite_width_upper|feature_singular_value|lipschitz_scaling)"
            ))),
        }
    }
}

/// A constants-to-1 width/variance expression. Never a certificate: sweeps
/// divide measured spectra by `value` and test that the ratio stays inside
/// a frozen band.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingExpression {
    pub formula: FormulaId,
    pub value: f64,
    /// Per-layer wide-layer indicators for layers `0..L-1` (the input
    /// counts as layer 0): 1 iff the width clears
    /// `N·ln(N)·ln(N/delta)`.
    pub xi_flags: Vec<u8>,
}

/// Wide-layer indicators for layers `0..L-1` of `arch` at sample count
/// `n_samples` and failure budget `delta`.
pub fn wide_layer_flags(arch: &Architecture, n_samples: usize, delta: f64) -> Result<Vec<u8>> {
    if n_samples == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let n = n_samples as f64;
    let threshold = n * n.ln() * (n / delta).ln();
    Ok((0..arch.depth())
        .map(|l| u8::from(arch.width(l) as f64 >= threshold))
        .collect())
}

/// Evaluate a structural scaling formula for `arch` at data scale `d` and
/// sample count `n_samples`. `r` is the Hermite order entering formulas
/// with a `μ_r²` prefactor; `k` is the layer index for the per-layer
/// formulas; each is ignored by formulas that do not use it.
pub fn scaling_expression(
    formula: FormulaId,
    arch: &Architecture,
    d: usize,
    n_samples: usize,
    delta_threshold: f64,
    r: usize,
    k: usize,
) -> Result<ScalingExpression> {
    if d == 0 {
        return Err(Error::invalid("data scale d must be at least 1"));
    }
    let xi_flags = wide_layer_flags(arch, n_samples, delta_threshold)?;
    let depth = arch.depth();
    let d = d as f64;
    let hidden_product: f64 = (1..depth).map(|l| arch.width(l) as f64).product();
    let variance_product: f64 = (1..=depth).map(|l| arch.variance(l)).product();
    let value = match formula {
        FormulaId::Limiting => d,
        FormulaId::FiniteWidthUpper => {
            let inv_var_sum: f64 = (1..=depth).map(|l| 1.0 / arch.variance(l)).sum();
            d * hidden_product * variance_product * inv_var_sum
        }
        FormulaId::FiniteWidthLower => {
            if r < 2 || r % 2 != 0 {
                return Err(Error::invalid(format!(
                    "Hermite order must be even and >= 2, got {r}"
                )));
            }
            let mu_sq = hermite_coeff_relu(r).powi(2);
            let gated_sum: f64 = (1..=depth)
                .map(|l| f64::from(xi_flags[l - 1]) / arch.variance(l))
                .sum();
            mu_sq * d * hidden_product * variance_product * gated_sum
        }
        FormulaId::FeatureSingularValue => {
            if k == 0 || k >= depth {
                return Err(Error::invalid(format!(
                    "feature layer {k} out of range (have 1..={})",
                    depth - 1
                )));
            }
            let prod: f64 = (1..=k).map(|l| arch.width(l) as f64 * arch.variance(l)).product();
            d * prod
        }
        FormulaId::LipschitzScaling => {
            if k == 0 || k > depth {
                return Err(Error::invalid(format!("layer {k} out of range (have 1..={depth})")));
            }
            let width_product: f64 = (0..=k).map(|l| arch.width(l) as f64).product();
            let min_width = (0..=k).map(|l| arch.width(l) as f64).fold(f64::INFINITY, f64::min);
            let log_product: f64 = (1..k).map(|l| (arch.width(l) as f64).ln()).product();
            let var_product: f64 = (1..=k).map(|l| arch.variance(l)).product();
            width_product / min_width * log_product * var_product
        }
    };
    Ok(ScalingExpression { formula, value, xi_flags })
}

/// Tolerance below which a pre-activation counts as sitting on the ReLU
/// kink, disqualifying the probe from the sampled Lipschitz estimate.
const SIGN_REJECT_TOL: f64 = 1e-12;

/// Result of the sampled Lipschitz estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    /// Max over kept probes of the local Jacobian operator norm. A lower
    /// estimate of the true Lipschitz constant (exact for `k = 1`).
    pub estimate: f64,
    /// Probes discarded for having a pre-activation on a kink.
    pub probes_rejected: usize,
}

/// Sampled Lipschitz estimate for the layer-`k` pre-activation map
/// `x ↦ g_k(x)`: draw `num_probes` inputs, discard any whose forward pass
/// touches a ReLU kink, and on each survivor evaluate the local Jacobian
/// norm `‖W_kᵀ Σ_{k-1} W_{k-1}ᵀ ⋯ Σ₁ W₁ᵀ‖_op` at that probe's activation
/// pattern. Returns the max over survivors.
pub fn lipschitz_empirical(
    weights: &WeightSet,
    k: usize,
    num_probes: usize,
    spec: &DataSpec,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let depth = weights.depth();
    if k == 0 || k > depth {
        return Err(Error::invalid(format!("layer {k} out of range (have 1..={depth})")));
    }
    if num_probes == 0 {
        return Err(Error::invalid("need at least one probe"));
    }
    if spec.dimension != weights.architecture().input_dim() {
        return Err(Error::shape(format!(
            "probe dimension {} does not match input width {}",
            spec.dimension,
            weights.architecture().input_dim()
        )));
    }
    if k == 1 {
        // The map is linear; no activation pattern is involved.
        return Ok(LipschitzEstimate { estimate: operator_norm(weights.layer(1))?, probes_rejected: 0 });
    }
    let probe_spec = DataSpec { n_samples: num_probes, seed, ..*spec };
    let x = sample(&probe_spec)?;
    let per_probe: Vec<Option<f64>> = (0..num_probes)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let xi = x.row(i).transpose();
            let trace = forward(weights, &xi)?;
            for l in 1..k {
                if trace.pre_activation(l).iter().any(|g| g.abs() <= SIGN_REJECT_TOL) {
                    return Ok(None);
                }
            }
            let mut a = weights.layer(1).transpose();
            for l in 1..k {
                let diag = trace.activation_diag(l);
                for (j, &dj) in diag.iter().enumerate() {
                    if dj == 0.0 {
                        a.row_mut(j).fill(0.0);
                    }
                }
                a = weights.layer(l + 1).transpose() * a;
            }
            operator_norm(&a).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut estimate = f64::NEG_INFINITY;
    let mut probes_rejected = 0usize;
    for v in per_probe {
        match v {
            Some(norm) => estimate = estimate.max(norm),
            None => probes_rejected += 1,
        }
    }
    if probes_rejected == num_probes {
        return Err(Error::numerical(format!(
            "all {num_probes} probes rejected: every draw had a pre-activation within {SIGN_REJECT_TOL:e} of a kink"
        )));
    }
    Ok(LipschitzEstimate { estimate, probes_rejected })
}

/// The always-valid Lipschitz upper bound `Π_{l≤k} ‖W_l‖_op`.
pub fn lipschitz_naive_bound(weights: &WeightSet, k: usize) -> Result<f64> {
    let depth = weights.depth();
    if k == 0 || k > depth {
        return Err(Error::invalid(format!("layer {k} out of range (have 1..={depth})")));
    }
    let mut product = 1.0;
    for l in 1..=k {
        product *= operator_norm(weights.layer(l))?;
    }
    Ok(product)
}
