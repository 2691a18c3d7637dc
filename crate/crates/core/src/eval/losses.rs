//! Matrix forecast losses against a realized proxy.
//!
//! The Euclidean loss sums squared deviations over the distinct entries
//! (lower triangle including the diagonal, each pair once); the Frobenius
//! loss sums over the full matrix, so off-diagonal deviations count twice.

use nalgebra::DMatrix;

use crate::error::{HeavyError, Result};

fn validate_pair(forecast: &DMatrix<f64>, proxy: &DMatrix<f64>) -> Result<usize> {
    let n = forecast.nrows();
    if forecast.ncols() != n || proxy.nrows() != n || proxy.ncols() != n {
        return Err(HeavyError::DimensionMismatch {
            context: "forecast loss".to_string(),
            expected: format!("{n} x {n} matrices"),
            actual: format!(
                "forecast {} x {}, proxy {} x {}",
                forecast.nrows(),
                forecast.ncols(),
                proxy.nrows(),
                proxy.ncols()
            ),
        });
    }
    if forecast.iter().chain(proxy.iter()).any(|x| !x.is_finite()) {
        return Err(HeavyError::DataQuality(
            "loss inputs contain non-finite entries".to_string(),
        ));
    }
    Ok(n)
}

/// Squared Euclidean distance over distinct entries:
/// sum_{i >= j} (proxy_ij - forecast_ij)^2.
pub fn euclidean_loss(forecast: &DMatrix<f64>, proxy: &DMatrix<f64>) -> Result<f64> {
    let n = validate_pair(forecast, proxy)?;
    let mut acc = 0.0;
    for j in 0..n {
        for i in j..n {
            let d = proxy[(i, j)] - forecast[(i, j)];
            acc += d * d;
        }
    }
    Ok(acc)
}

/// Squared Frobenius distance over all entries:
/// sum_{i,j} (proxy_ij - forecast_ij)^2.
pub fn frobenius_loss(forecast: &DMatrix<f64>, proxy: &DMatrix<f64>) -> Result<f64> {
    validate_pair(forecast, proxy)?;
    let mut acc = 0.0;
    for (f, p) in forecast.iter().zip(proxy.iter()) {
        let d = p - f;
        acc += d * d;
    }
    Ok(acc)
}
