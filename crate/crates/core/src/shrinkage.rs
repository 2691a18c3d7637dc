//! Residual covariance estimation.
//!
//! The idiosyncratic covariance Sigma_eps is estimated from the factor-model
//! residuals eps_{i,t} = (r_i - mu_i) - beta_{i,t}'(r^c - mu^c). Because N can
//! be of the same order as T, the sample covariance is regularized by
//! analytical nonlinear shrinkage: the sample eigenvalues are replaced by
//!
//!   d_i = lambda_i / [ (pi c lambda_i f(lambda_i))^2
//!                      + (1 - c - pi c lambda_i Hf(lambda_i))^2 ],   c = p/n
//!
//! where f is an Epanechnikov kernel estimate of the eigenvalue density with
//! per-point bandwidth h lambda_j, h = n^{-1/3}, and Hf its Hilbert
//! transform. Eigenvectors are kept. Two safeguards are added on top:
//! a relative eigenvalue floor and a trace renormalization so the shrunk
//! matrix preserves tr(S) (an identity sample covariance maps to identity).
//!
//! A linear oracle-approximating shrinkage toward the scaled identity is
//! available as a fallback for very short samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HeavyError, Result};
use crate::linalg::symmetrize;

/// Relative floor applied to shrunk eigenvalues: floor = RELATIVE_FLOOR * tr(S)/p.
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// Residual covariance estimator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkageKind {
    #[default]
    Nonlinear,
    Linear,
}

/// Residuals of the hierarchical factor decomposition, T x N:
/// eps_{t,i} = (r_{t,i} - mu_i) - beta_{t,i}' (r^c_t - mu^c).
pub fn compute_residuals(
    asset_returns: &DMatrix<f64>,
    factor_returns: &DMatrix<f64>,
    betas: &[DMatrix<f64>],
    asset_means: &DVector<f64>,
    factor_means: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let t = asset_returns.nrows();
    let n = asset_returns.ncols();
    let k = factor_returns.ncols();
    if factor_returns.nrows() != t
        || betas.len() != t
        || asset_means.len() != n
        || factor_means.len() != k
    {
        return Err(HeavyError::DimensionMismatch {
            context: "residual computation".to_string(),
            expected: format!("{t} months, {n} assets, {k} factors"),
            actual: format!(
                "factor rows {}, beta matrices {}, means {}/{}",
                factor_returns.nrows(),
                betas.len(),
                asset_means.len(),
                factor_means.len()
            ),
        });
    }
    let mut eps = DMatrix::zeros(t, n);
    for row in 0..t {
        let b = &betas[row];
        if b.nrows() != n || b.ncols() != k {
            return Err(HeavyError::DimensionMismatch {
                context: format!("beta matrix at month index {row}"),
                expected: format!("{n} x {k}"),
                actual: format!("{} x {}", b.nrows(), b.ncols()),
            });
        }
        for i in 0..n {
            let mut fitted = 0.0;
            for j in 0..k {
                fitted += b[(i, j)] * (factor_returns[(row, j)] - factor_means[j]);
            }
            eps[(row, i)] = asset_returns[(row, i)] - asset_means[i] - fitted;
        }
    }
    Ok(eps)
}

/// Sample covariance of already-centered observations, X'X / n.
pub fn sample_covariance(centered: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = centered.nrows();
    if n < 2 {
        return Err(HeavyError::DataQuality(
            "need at least two observations for a covariance".to_string(),
        ));
    }
    Ok(centered.transpose() * centered / n as f64)
}

/// Dispatches to the configured shrinkage estimator.
pub fn shrink_covariance(s: &DMatrix<f64>, n_obs: usize, kind: ShrinkageKind) -> Result<DMatrix<f64>> {
    match kind {
        ShrinkageKind::Nonlinear => nonlinear_shrink(s, n_obs),
        ShrinkageKind::Linear => linear_shrink(s, n_obs),
    }
}

/// Estimates the residual covariance from residuals (rows = months).
pub fn residual_covariance(
    residuals: &DMatrix<f64>,
    kind: ShrinkageKind,
) -> Result<DMatrix<f64>> {
    let s = sample_covariance(residuals)?;
    shrink_covariance(&s, residuals.nrows(), kind)
}

fn sorted_symmetric_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(s);
    let eig = sym.symmetric_eigen();
    let p = s.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*a]
            .partial_cmp(&eig.eigenvalues[*b])
            .expect("non-finite eigenvalue")
    });
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
    }
    (lambda, u)
}

const SQRT5: f64 = 2.236_067_977_499_79;

/// Analytical nonlinear shrinkage with an eigenvalue floor and trace
/// renormalization. `n_obs` is the number of observations behind `s`.
pub fn nonlinear_shrink(s: &DMatrix<f64>, n_obs: usize) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    if s.ncols() != p || p == 0 {
        return Err(HeavyError::DimensionMismatch {
            context: "nonlinear shrinkage input".to_string(),
            expected: "square matrix".to_string(),
            actual: format!("{} x {}", s.nrows(), s.ncols()),
        });
    }
    if n_obs < 3 {
        return Err(HeavyError::DataQuality(
            "nonlinear shrinkage needs at least three observations".to_string(),
        ));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(HeavyError::DataQuality(
            "covariance input contains non-finite entries".to_string(),
        ));
    }
    let trace: f64 = (0..p).map(|i| s[(i, i)]).sum();
    if !(trace > 0.0) {
        return Err(HeavyError::DataQuality(format!(
            "covariance trace must be positive, got {trace}"
        )));
    }

    let n = n_obs;
    let (lambda, u) = sorted_symmetric_eigen(s);
    let nu = p.min(n);
    // Nonzero part of the spectrum; tiny or negative values are lifted to a
    // small positive multiple of the largest eigenvalue for stability.
    let lam_max = lambda[p - 1].max(1e-300);
    let lam_nz: Vec<f64> = lambda[p - nu..]
        .iter()
        .map(|&x| x.max(1e-12 * lam_max))
        .collect();

    if p > n && SQRT5 * (n as f64).powf(-1.0 / 3.0) >= 1.0 {
        return Err(HeavyError::DataQuality(format!(
            "nonlinear shrinkage with p > n needs n >= 12 observations, got {n}"
        )));
    }

    let h = (n as f64).powf(-1.0 / 3.0);
    let c = p as f64 / n as f64;

    // Kernel density estimate and its Hilbert transform at each nonzero
    // eigenvalue; bandwidth h * lambda_j around each data point j.
    let mut ftilde = vec![0.0; nu];
    let mut hftilde = vec![0.0; nu];
    for i in 0..nu {
        let (mut facc, mut hacc) = (0.0, 0.0);
        for j in 0..nu {
            let bw = h * lam_nz[j];
            let x = (lam_nz[i] - lam_nz[j]) / bw;
            let one_minus = 1.0 - x * x / 5.0;
            if one_minus > 0.0 {
                facc += 0.75 / SQRT5 * one_minus / bw;
            }
            let mut hterm = -(3.0 / (10.0 * std::f64::consts::PI)) * x;
            if one_minus.abs() > 1e-14 {
                let ratio = ((SQRT5 - x) / (SQRT5 + x)).abs();
                if ratio > 0.0 && ratio.is_finite() {
                    hterm += 0.75 / (SQRT5 * std::f64::consts::PI) * one_minus * ratio.ln();
                }
            }
            hacc += hterm / bw;
        }
        ftilde[i] = facc / nu as f64;
        hftilde[i] = hacc / nu as f64;
    }

    let pi = std::f64::consts::PI;
    let mut d = vec![0.0; p];
    if p <= n {
        for i in 0..nu {
            let lam = lam_nz[i];
            let a = pi * c * lam * ftilde[i];
            let b = 1.0 - c - pi * c * lam * hftilde[i];
            d[p - nu + i] = lam / (a * a + b * b);
        }
    } else {
        // Zero eigenvalues all map to a common positive value derived from
        // the Hilbert transform of the density at zero.
        let inv_mean: f64 = lam_nz.iter().map(|x| 1.0 / x).sum::<f64>() / nu as f64;
        let log_arg = (1.0 + SQRT5 * h) / (1.0 - SQRT5 * h);
        let hf0 = (1.0 / pi)
            * (3.0 / (10.0 * h * h)
                + 0.75 / (SQRT5 * h) * (1.0 - 1.0 / (5.0 * h * h)) * log_arg.ln())
            * inv_mean;
        let d0 = 1.0 / (pi * (p - n) as f64 / n as f64 * hf0);
        for slot in d.iter_mut().take(p - nu) {
            *slot = d0;
        }
        for i in 0..nu {
            let lam = lam_nz[i];
            let denom = pi * pi * lam * lam * (ftilde[i] * ftilde[i] + hftilde[i] * hftilde[i]);
            d[p - nu + i] = lam / denom;
        }
    }

    // Safeguards: floor, then renormalize to preserve the trace.
    let floor = RELATIVE_FLOOR * trace / p as f64;
    for x in d.iter_mut() {
        if !x.is_finite() || *x < floor {
            *x = floor;
        }
    }
    let d_sum: f64 = d.iter().sum();
    let scale = trace / d_sum;
    for x in d.iter_mut() {
        *x *= scale;
    }

    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        let col = u.column(j);
        for a in 0..p {
            for b in a..p {
                out[(a, b)] += d[j] * col[a] * col[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            out[(a, b)] = out[(b, a)];
        }
    }
    Ok(out)
}

/// Oracle-approximating linear shrinkage toward the scaled identity:
/// Sigma = (1 - rho) S + rho (tr(S)/p) I.
pub fn linear_shrink(s: &DMatrix<f64>, n_obs: usize) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    if s.ncols() != p || p == 0 {
        return Err(HeavyError::DimensionMismatch {
            context: "linear shrinkage input".to_string(),
            expected: "square matrix".to_string(),
            actual: format!("{} x {}", s.nrows(), s.ncols()),
        });
    }
    if n_obs < 2 {
        return Err(HeavyError::DataQuality(
            "linear shrinkage needs at least two observations".to_string(),
        ));
    }
    let trace: f64 = (0..p).map(|i| s[(i, i)]).sum();
    if !(trace > 0.0) {
        return Err(HeavyError::DataQuality(format!(
            "covariance trace must be positive, got {trace}"
        )));
    }
    let mu = trace / p as f64;
    let sym = symmetrize(s);
    let tr_s2: f64 = sym.iter().map(|x| x * x).sum();
    let pf = p as f64;
    let nf = n_obs as f64;
    let numer = (1.0 - 2.0 / pf) * tr_s2 + trace * trace;
    let denom = (nf + 1.0 - 2.0 / pf) * (tr_s2 - trace * trace / pf);
    let rho = if denom <= 0.0 {
        1.0
    } else {
        (numer / denom).clamp(0.0, 1.0)
    };
    let mut out = sym * (1.0 - rho);
    for i in 0..p {
        out[(i, i)] += rho * mu;
    }
    Ok(out)
}
