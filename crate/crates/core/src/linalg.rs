//! Small dense linear-algebra helpers shared by the model code.
//!
//! Everything here operates on `nalgebra` dynamic matrices. Positive
//! definiteness is always decided by an attempted Cholesky factorization of
//! `A - tol * I`, which is both the production check and the cheapest one.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{HeavyError, Result};

/// Default tolerance below which an eigenvalue is treated as zero when
/// deciding positive definiteness.
pub const PD_TOL: f64 = 1e-10;

/// Returns true when `a` is symmetric positive definite with minimum
/// eigenvalue above `tol`, decided via Cholesky of `a - tol * I`.
pub fn is_pd(a: &DMatrix<f64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let mut shifted = a.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= tol;
    }
    Cholesky::new(shifted).is_some()
}

/// Cholesky factorization with the library's error type. `context` and
/// `time` label the failure for diagnostics.
pub fn cholesky_or_err(a: &DMatrix<f64>, context: &str, time: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| HeavyError::PdViolation {
        time,
        context: context.to_string(),
        min_eigenvalue: min_eigenvalue(a),
    })
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first to guard
/// against accumulated asymmetry).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(a);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// (A + A') / 2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Sets every diagonal entry to exactly 1.0. Correlation recursions keep
/// their diagonals at one only up to rounding, so they are pinned after
/// every update.
pub fn pin_unit_diagonal(a: &mut DMatrix<f64>) {
    for i in 0..a.nrows().min(a.ncols()) {
        a[(i, i)] = 1.0;
    }
}

/// Converts a covariance matrix to the corresponding correlation matrix.
/// Fails with `DataQuality` when a diagonal entry is not strictly positive.
pub fn cov_to_corr(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let v = cov[(i, i)];
        if !(v > 0.0) {
            return Err(HeavyError::DataQuality(format!(
                "cannot normalize to a correlation matrix: variance {v:e} at index {i}"
            )));
        }
        scale[i] = 1.0 / v.sqrt();
    }
    let mut corr = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            corr[(i, j)] = cov[(i, j)] * scale[i] * scale[j];
        }
    }
    pin_unit_diagonal(&mut corr);
    Ok(corr)
}

/// Lower-triangular half-vectorization (column stacking of the lower
/// triangle, diagonal included).
pub fn vech(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            out[k] = a[(i, j)];
            k += 1;
        }
    }
    out
}

/// Solves `A x = b` through an existing Cholesky factorization.
pub fn chol_solve(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    chol.solve(b)
}

/// log|A| from a Cholesky factorization: 2 * sum(log diag(L)).
pub fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Mean of a slice; NaN on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); NaN for fewer than two
/// observations.
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}
