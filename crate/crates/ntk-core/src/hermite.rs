//! Hermite expansion of the ReLU and Khatri–Rao row powers.
//!
//! In the orthonormal Hermite basis of the standard Gaussian, the ReLU has
//! coefficients μ₀ = 1/√(2π), μ₁ = 1/2, μ_r = 0 for odd r ≥ 3, and for even
//! r ≥ 2
//!
//! ```text
//!     μ_r = (1/√(2π)) · (-1)^((r-2)/2) · (r-3)!! / √(r!)
//! ```
//!
//! with (-1)!! = 1. Two identities anchor the scale: μ₁² = 1/4 and
//! Σ_{r≠1} μ_r² = 1/4 (together they recover E[σ(g)²] = 1/2). The series
//! Σ μ_s² ρ^s is the ReLU dual kernel on unit-variance inputs, which the
//! closed arc-cosine form in [`crate::kernel`] evaluates directly — the two
//! routes are kept separate so they can check each other.
//!
//! The Khatri–Rao half of the module realises row-wise Kronecker powers
//! M^{*r}, whose Gram is the entrywise power (MMᵀ)^{∘r}, and Gershgorin
//! eigenvalue bounds for such Grams. Those Grams are the positive-definite
//! core of every lower bound in [`crate::bounds`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Entry budget for materialising a Khatri–Rao power explicitly.
const KHATRI_RAO_ENTRY_BUDGET: f64 = 1e8;

/// ln k! by direct log summation (exact enough through k = 200 and beyond).
fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// ln k!! for odd k ≥ -1, with (-1)!! = 1 (k = -1 is passed as `None`).
fn ln_odd_double_factorial(k: Option<usize>) -> f64 {
    match k {
        None => 0.0,
        Some(k) => (1..=k).step_by(2).map(|j| (j as f64).ln()).sum(),
    }
}

/// r-th Hermite coefficient of the ReLU in the orthonormal basis.
pub fn hermite_coeff_relu(r: usize) -> f64 {
    match r {
        0 => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
        1 => 0.5,
        _ if r % 2 == 1 => 0.0,
        _ => {
            let half = (r - 2) / 2;
            let sign = if half % 2 == 0 { 1.0 } else { -1.0 };
            let ln_df = if r == 2 {
                ln_odd_double_factorial(None)
            } else {
                ln_odd_double_factorial(Some(r - 3))
            };
            let ln_mag =
                ln_df - 0.5 * ln_factorial(r) - 0.5 * (2.0 * std::f64::consts::PI).ln();
            sign * ln_mag.exp()
        }
    }
}

/// Partial Hermite series of the ReLU dual kernel at correlation `rho`:
/// Σ_{s=0}^{s_max} μ_s² ρ^s. Converges to E[σ(u)σ(v)] for (u, v) standard
/// bivariate normal with correlation ρ.
pub fn dual_from_hermite(rho: f64, s_max: usize) -> Result<f64> {
    if !rho.is_finite() || rho.abs() > 1.0 {
        return Err(Error::invalid(format!("correlation {rho} outside [-1, 1]")));
    }
    let mut sum = 0.0;
    let mut rho_pow = 1.0;
    for s in 0..=s_max {
        let mu = hermite_coeff_relu(s);
        sum += mu * mu * rho_pow;
        rho_pow *= rho;
    }
    Ok(sum)
}

/// Row-wise r-fold Kronecker power `M^{*r}`: row i of the result is
/// `row_i ⊗ … ⊗ row_i` (r factors), shape `N x m^r`.
///
/// Refuses to materialise more than 10⁸ entries; the Gram of the power is
/// available without materialisation through [`khatri_rao_gram`].
pub fn khatri_rao_power(m: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    if r == 0 {
        return Err(Error::invalid("Khatri-Rao power needs r >= 1"));
    }
    let (n, cols) = m.shape();
    if n == 0 || cols == 0 {
        return Err(Error::shape("Khatri-Rao power of an empty matrix"));
    }
    let out_cols_f = (cols as f64).powi(r as i32);
    if n as f64 * out_cols_f > KHATRI_RAO_ENTRY_BUDGET {
        return Err(Error::Budget(format!(
            "Khatri-Rao power would hold {n} x {cols}^{r} > 1e8 entries; \
             use khatri_rao_gram for its Gram instead"
        )));
    }
    let out_cols = out_cols_f as usize;
    let mut out = DMatrix::zeros(n, out_cols);
    let mut scratch = vec![0.0_f64; out_cols];
    for i in 0..n {
        // Repeated Kronecker product with the row, built left to right.
        scratch[0] = 1.0;
        let mut len = 1usize;
        for _ in 0..r {
            for a in (0..len).rev() {
                let v = scratch[a];
                for (b, e) in m.row(i).iter().enumerate() {
                    scratch[a * cols + b] = v * e;
                }
            }
            len *= cols;
        }
        for (j, v) in scratch[..len].iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Gram of a Khatri–Rao power, held implicitly: `gram = (MMᵀ)^{∘r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KhatriRaoGram {
    /// The base matrix M.
    pub base: DMatrix<f64>,
    /// The Kronecker power r ≥ 1.
    pub power: usize,
    /// `N x N` Gram of `M^{*r}`, i.e. the entrywise r-th power of `MMᵀ`.
    pub gram: DMatrix<f64>,
}

/// Gram of `M^{*r}` without materialising the power.
pub fn khatri_rao_gram(m: &DMatrix<f64>, r: usize) -> Result<KhatriRaoGram> {
    if r == 0 {
        return Err(Error::invalid("Khatri-Rao gram needs r >= 1"));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::shape("Khatri-Rao gram of an empty matrix"));
    }
    let base_gram = m * m.transpose();
    let gram = base_gram.map(|v| v.powi(r as i32));
    Ok(KhatriRaoGram { base: m.clone(), power: r, gram })
}

/// Which multiplier scales the worst off-diagonal in the Gershgorin radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GershgorinVariant {
    /// Radius `(N-1) · max_offdiag` — the tight count of off-diagonal terms.
    #[default]
    NMinusOne,
    /// Radius `N · max_offdiag` — a looser but sometimes more convenient count.
    N,
}

/// Gershgorin bounds `(lower, upper)` for the spectrum of the Khatri–Rao
/// Gram `(MMᵀ)^{∘r}`:
///
/// ```text
///   lower = min_i ‖M_i‖^{2r} - c · max_{i≠j} |⟨M_i, M_j⟩|^r
///   upper = max_i ‖M_i‖^{2r} + c · max_{i≠j} |⟨M_i, M_j⟩|^r
/// ```
///
/// with `c = N-1` or `c = N` per `variant`. Every eigenvalue of the Gram
/// lies in `[lower, upper]`.
pub fn gershgorin_bounds(
    m: &DMatrix<f64>,
    r: usize,
    variant: GershgorinVariant,
) -> Result<(f64, f64)> {
    if r == 0 {
        return Err(Error::invalid("Gershgorin bounds need r >= 1"));
    }
    let n = m.nrows();
    if n == 0 || m.ncols() == 0 {
        return Err(Error::shape("Gershgorin bounds of an empty matrix"));
    }
    let gram = m * m.transpose();
    let mut min_diag = f64::INFINITY;
    let mut max_diag = f64::NEG_INFINITY;
    let mut max_offdiag = 0.0_f64;
    for i in 0..n {
        let di = gram[(i, i)].powi(r as i32);
        min_diag = min_diag.min(di);
        max_diag = max_diag.max(di);
        for j in 0..i {
            max_offdiag = max_offdiag.max(gram[(i, j)].abs().powi(r as i32));
        }
    }
    let c = match variant {
        GershgorinVariant::NMinusOne => (n - 1) as f64,
        GershgorinVariant::N => n as f64,
    };
    Ok((min_diag - c * max_offdiag, max_diag + c * max_offdiag))
}
