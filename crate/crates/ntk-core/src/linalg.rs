//! Dense symmetric spectral helpers shared by the kernel and bound modules.
//!
//! Everything here is exact-arithmetic-free: eigenvalues come from
//! `nalgebra`'s symmetric eigensolver (tridiagonalisation + implicit QL),
//! which is pure Rust and bit-deterministic for a given input matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum QL sweeps before the eigensolver gives up. Symmetric problems at
/// the sizes used here (N ≤ a few thousand) converge in a handful of sweeps.
const EIGEN_MAX_ITER: usize = 10_000;

fn check_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::shape(format!(
            "{what} must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// `(A + Aᵀ)/2` — the exact symmetric part.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Eigenvalues of the symmetric part of `a`, sorted ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square(a, "eigenvalue input")?;
    check_finite(a, "eigenvalue input")?;
    let sym = symmetrize(a);
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(vals)
}

/// Full eigendecomposition of the symmetric part: `(eigenvalues, eigenvectors)`
/// with `a ≈ V diag(λ) Vᵀ`. Order is whatever the solver produced.
pub fn sym_eigendecomposition(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_square(a, "eigendecomposition input")?;
    check_finite(a, "eigendecomposition input")?;
    let sym = symmetrize(a);
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn smallest_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(*sym_eigenvalues(a)?.first().expect("non-empty spectrum"))
}

/// Largest eigenvalue of the symmetric part of `a`.
pub fn largest_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(*sym_eigenvalues(a)?.last().expect("non-empty spectrum"))
}

/// Gram of the smaller side: `FFᵀ` when `F` has at most as many rows as
/// columns, `FᵀF` otherwise. Both have the squared singular values of `F`
/// as their nonzero spectrum; taking the smaller keeps the eigensolve cheap.
fn small_gram(f: &DMatrix<f64>) -> DMatrix<f64> {
    if f.nrows() <= f.ncols() {
        f * f.transpose()
    } else {
        f.transpose() * f
    }
}

/// Smallest singular value of a rectangular matrix (the min over
/// `min(nrows, ncols)` singular values), computed from the smaller Gram.
pub fn smallest_singular_value(f: &DMatrix<f64>) -> Result<f64> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(Error::shape("singular values of an empty matrix".to_string()));
    }
    check_finite(f, "singular value input")?;
    let lam = smallest_eigenvalue(&small_gram(f))?;
    Ok(lam.max(0.0).sqrt())
}

/// Largest singular value (spectral norm), computed from the smaller Gram.
pub fn operator_norm(f: &DMatrix<f64>) -> Result<f64> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(Error::shape("operator norm of an empty matrix".to_string()));
    }
    check_finite(f, "operator norm input")?;
    let lam = largest_eigenvalue(&small_gram(f))?;
    Ok(lam.max(0.0).sqrt())
}

/// Symmetric positive-semidefinite square root.
///
/// Rejects matrices that are asymmetric beyond `1e-12` relative to their
/// operator norm, and matrices with an eigenvalue below `-1e-10 · ‖A‖_op`.
/// Eigenvalues in `[-1e-10 · ‖A‖_op, 0)` are treated as rounded zeros and
/// clipped. `layer` only labels the error for callers iterating a kernel
/// recursion; pass 0 outside one.
pub fn matrix_sqrt(a: &DMatrix<f64>, layer: usize) -> Result<DMatrix<f64>> {
    check_square(a, "matrix sqrt input").map_err(|e| lift_sqrt_err(e, layer))?;
    check_finite(a, "matrix sqrt input").map_err(|e| lift_sqrt_err(e, layer))?;

    let scale = operator_norm(a)?;
    let asym = (a - a.transpose()).norm();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::MatrixSqrt {
            layer,
            detail: format!("input asymmetric: ‖A-Aᵀ‖_F = {asym:.3e}"),
        });
    }

    let (vals, vecs) = sym_eigendecomposition(a).map_err(|e| lift_sqrt_err(e, layer))?;
    let floor = -1e-10 * scale;
    let mut roots = DVector::zeros(vals.len());
    for (i, &lam) in vals.iter().enumerate() {
        if lam < floor {
            return Err(Error::MatrixSqrt {
                layer,
                detail: format!("eigenvalue {lam:.6e} below clip floor {floor:.6e}"),
            });
        }
        roots[i] = lam.max(0.0).sqrt();
    }
    let half = &vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
    // The eigenvector product is symmetric only up to rounding; make it exact.
    Ok(symmetrize(&half))
}

fn lift_sqrt_err(e: Error, layer: usize) -> Error {
    Error::MatrixSqrt { layer, detail: e.to_string() }
}

/// `‖a - b‖_F / max(‖a‖_F, ‖b‖_F)`, with 0 for two zero matrices.
pub fn rel_frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = a.norm().max(b.norm());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).norm() / denom
    }
}

/// Largest absolute entry difference between two equal-shaped matrices.
pub fn max_abs_entry_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max)
}
