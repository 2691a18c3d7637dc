//! Global minimum variance portfolios.
//!
//! Unconstrained weights solve min w'Hw subject to 1'w = 1, giving
//! w = H^{-1} 1 / (1' H^{-1} 1). The long-only variant adds w >= 0 and is
//! solved exactly with a primal active-set method: the equality-constrained
//! subproblem is re-solved on the free set, blocking constraints are hit by
//! partial steps, and zero-weight assets re-enter when their Lagrange
//! multiplier (Hw)_i - w'Hw turns negative.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{HeavyError, Result};
use crate::linalg::cholesky_or_err;

/// Closed-form minimum variance weights; requires H positive definite.
pub fn gmvp_weights(h: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    if h.ncols() != n || n == 0 {
        return Err(HeavyError::DimensionMismatch {
            context: "minimum variance weights".to_string(),
            expected: "non-empty square covariance".to_string(),
            actual: format!("{} x {}", h.nrows(), h.ncols()),
        });
    }
    let chol = cholesky_or_err(h, "minimum variance covariance", 0)?;
    let ones = DVector::from_element(n, 1.0);
    let x = chol.solve(&ones);
    let s = x.sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(HeavyError::DataQuality(format!(
            "degenerate covariance: 1'H^{{-1}}1 = {s}"
        )));
    }
    Ok(x / s)
}

/// Solves the equality-constrained subproblem on the free index set.
fn restricted_gmvp(h: &DMatrix<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let m = free.len();
    let hf = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let chol = Cholesky::new(hf).ok_or_else(|| {
        HeavyError::DataQuality("restricted covariance block is not positive definite".to_string())
    })?;
    let ones = DVector::from_element(m, 1.0);
    let x = chol.solve(&ones);
    let s = x.sum();
    if !(s.is_finite() && s.abs() > 1e-300) {
        return Err(HeavyError::DataQuality(
            "restricted covariance block is numerically degenerate".to_string(),
        ));
    }
    Ok(x / s)
}

/// Long-only minimum variance weights via a primal active-set method.
pub fn gmvp_weights_long_only(h: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    if h.ncols() != n || n == 0 {
        return Err(HeavyError::DimensionMismatch {
            context: "long-only minimum variance weights".to_string(),
            expected: "non-empty square covariance".to_string(),
            actual: format!("{} x {}", h.nrows(), h.ncols()),
        });
    }
    cholesky_or_err(h, "long-only covariance", 0)?;

    let scale = h.trace() / n as f64;
    let w_tol = 1e-12;
    let mu_tol = 1e-12 * scale.max(1e-300);

    // Start from equal weights, which are always feasible.
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut free: Vec<bool> = vec![true; n];

    for _ in 0..(50 * n + 100) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let target = restricted_gmvp(h, &idx)?;

        let negative = target.iter().any(|&x| x < -w_tol);
        if !negative {
            for (slot, &i) in idx.iter().enumerate() {
                w[i] = target[slot].max(0.0);
            }
            // KKT check on the bound assets.
            let hw = h * &w;
            let lambda = w.dot(&hw);
            let mut release: Option<(usize, f64)> = None;
            for i in 0..n {
                if !free[i] {
                    let mu = hw[i] - lambda;
                    if mu < -mu_tol && release.map_or(true, |(_, best)| mu < best) {
                        release = Some((i, mu));
                    }
                }
            }
            match release {
                Some((i, _)) => {
                    free[i] = true;
                    w[i] = 0.0;
                }
                None => {
                    let s = w.sum();
                    return Ok(w / s);
                }
            }
            continue;
        }

        // Partial step toward the subproblem solution until the first free
        // weight hits zero; that asset becomes bound.
        let mut alpha = 1.0;
        let mut blocker = None;
        for (slot, &i) in idx.iter().enumerate() {
            let wi = w[i];
            let ti = target[slot];
            if ti < wi - 1e-300 && ti < 0.0 {
                let step = wi / (wi - ti);
                if step < alpha {
                    alpha = step;
                    blocker = Some(i);
                }
            }
        }
        for (slot, &i) in idx.iter().enumerate() {
            w[i] += alpha * (target[slot] - w[i]);
        }
        if let Some(i) = blocker {
            w[i] = 0.0;
            free[i] = false;
        } else {
            // No blocking constraint despite a negative target: clamp and
            // bind every negative coordinate.
            for &i in &idx {
                if w[i] < -w_tol {
                    w[i] = 0.0;
                    free[i] = false;
                }
            }
        }
        if !free.iter().any(|&f| f) {
            return Err(HeavyError::EstimationFailed {
                stage: "long_only_gmvp".to_string(),
                message: "active set emptied".to_string(),
            });
        }
    }

    Err(HeavyError::EstimationFailed {
        stage: "long_only_gmvp".to_string(),
        message: "active-set iteration cap reached".to_string(),
    })
}

/// Portfolio variance w'Hw.
pub fn portfolio_variance(h: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(h * w))
}
