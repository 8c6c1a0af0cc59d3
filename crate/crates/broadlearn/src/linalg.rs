//! Small dense linear-algebra helpers.
//!
//! Data lives in `ndarray`; factorizations (Cholesky, SVD, symmetric
//! eigenvalues) run through `nalgebra`, converting at the boundary. The
//! systems solved here stay in the hundreds of rows, so the copies are
//! noise.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Solves `K X = B` for symmetric positive-definite `K` via Cholesky.
/// Never forms an explicit inverse.
pub fn solve_spd(k: &Array2<f64>, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    let n = k.nrows();
    if k.ncols() != n || rhs.nrows() != n {
        return Err(Error::Data(format!(
            "solve_spd: matrix is {}x{}, rhs has {} rows",
            k.nrows(),
            k.ncols(),
            rhs.nrows()
        )));
    }
    let factor = Cholesky::new(to_na(k))
        .ok_or_else(|| Error::Numeric("cholesky factorization failed: matrix is not positive definite".into()))?;
    Ok(from_na(&factor.solve(&to_na(rhs))))
}

fn svd_of(a: &Array2<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = to_na(a).svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd did not produce U".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numeric("svd did not produce Vᵀ".into()))?;
    Ok((u, svd.singular_values.iter().copied().collect(), vt))
}

/// Least-squares solution `A⁺ B` through an SVD of `A`, with singular values
/// below `max(n, m) · eps · σ_max` treated as zero.
pub fn lstsq_pinv(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    ridge_via_svd(a, b, 0.0)
}

/// Ridge solution `(AᵀA + λI)⁻¹AᵀB` computed from the SVD of `A`:
/// `V·diag(σ/(σ² + λ))·UᵀB`. With λ = 0 this is the thresholded
/// pseudo-inverse; for λ > 0 it is an exact but slower alternative to the
/// Cholesky route, used when the Gram matrix is too ill-conditioned to
/// factorize.
pub fn ridge_via_svd(a: &Array2<f64>, b: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Data(format!(
            "ridge_via_svd: A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (u, s, vt) = svd_of(a)?;
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let tol = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    let utb = u.transpose() * to_na(b);
    let mut scaled = DMatrix::zeros(vt.nrows(), b.ncols());
    for (i, &sv) in s.iter().enumerate() {
        let gain = if lambda > 0.0 {
            sv / (sv * sv + lambda)
        } else if sv > tol {
            1.0 / sv
        } else {
            0.0
        };
        if gain != 0.0 {
            for j in 0..b.ncols() {
                scaled[(i, j)] = utb[(i, j)] * gain;
            }
        }
    }
    Ok(from_na(&(vt.transpose() * scaled)))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(to_na(a));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    vals
}

/// Solves a general square system by LU with partial pivoting.
pub fn solve_lu(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let lu = nalgebra::LU::<f64, Dyn, Dyn>::new(to_na(a));
    lu.solve(&to_na(b))
        .map(|x| from_na(&x))
        .ok_or_else(|| Error::Numeric("lu solve failed: singular matrix".into()))
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix by power
/// iteration with a fixed pseudo-random start.
pub fn largest_eigenvalue_psd(g: &Array2<f64>, iters: usize) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic non-degenerate start vector.
    let mut v = Array1::from_shape_fn(n, |i| {
        let h = (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5bf0_3635;
        1.0 + (h % 1024) as f64 / 1024.0
    });
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = g.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        v = w / norm;
        lambda = v.dot(&g.dot(&v));
    }
    lambda
}

/// Per-row argmax with ties broken by the lowest column index.
pub fn row_argmax(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_val {
                    best_val = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn frobenius_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}
