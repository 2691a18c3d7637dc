//! Realized measures built from daily returns within each month.
//!
//! For month t with daily return vectors x_1..x_d:
//!   realized covariance   RC_t = sum_j x_j x_j'
//!   realized variance     v_t  = diag(RC_t)
//!   signed semivariances  v+ = sum r^2 1{r > 0},  v- = sum r^2 1{r <= 0}
//!   realized correlation  RL_t = normalized RC_t with unit diagonal
//!
//! Zero daily returns land in the negative semivariance leg, matching the
//! indicator convention of the variance recursions. Realized variances are
//! stored as v+ + v- so the decomposition holds exactly in floating point.

use nalgebra::DMatrix;

use crate::error::{HeavyError, Result};
use crate::linalg::pin_unit_diagonal;
use crate::panel::{ReturnPanel, YearMonth};

/// Monthly realized measures for the factor block and the asset
/// cross-section.
#[derive(Debug, Clone)]
pub struct RealizedMeasures {
    pub months: Vec<YearMonth>,
    pub factor_names: Vec<String>,
    pub asset_names: Vec<String>,
    /// T x K realized variances of the factors.
    pub factor_rv: DMatrix<f64>,
    /// T x K positive semivariances (daily returns > 0).
    pub factor_rv_pos: DMatrix<f64>,
    /// T x K negative semivariances (daily returns <= 0).
    pub factor_rv_neg: DMatrix<f64>,
    /// Realized covariance of the factors, one K x K matrix per month.
    pub factor_rcov: Vec<DMatrix<f64>>,
    /// Realized correlation of the factors, unit diagonal.
    pub factor_rcorr: Vec<DMatrix<f64>>,
    /// T x N realized variances of the assets.
    pub asset_rv: DMatrix<f64>,
    pub asset_rv_pos: DMatrix<f64>,
    pub asset_rv_neg: DMatrix<f64>,
    /// Asset-by-factor realized covariances, one N x K matrix per month.
    pub asset_factor_rcov: Vec<DMatrix<f64>>,
    /// Asset-by-factor realized correlations, entries clamped to [-1, 1].
    pub asset_factor_rcorr: Vec<DMatrix<f64>>,
}

impl RealizedMeasures {
    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    /// Realized correlations of asset `i` with every factor, as a T x K
    /// matrix.
    pub fn asset_corr_path(&self, asset: usize) -> DMatrix<f64> {
        let t = self.n_months();
        let k = self.n_factors();
        let mut out = DMatrix::zeros(t, k);
        for (row, rl) in self.asset_factor_rcorr.iter().enumerate() {
            for j in 0..k {
                out[(row, j)] = rl[(asset, j)];
            }
        }
        out
    }

    /// Realized covariances of asset `i` with every factor, T x K.
    pub fn asset_cov_path(&self, asset: usize) -> DMatrix<f64> {
        let t = self.n_months();
        let k = self.n_factors();
        let mut out = DMatrix::zeros(t, k);
        for (row, rc) in self.asset_factor_rcov.iter().enumerate() {
            for j in 0..k {
                out[(row, j)] = rc[(asset, j)];
            }
        }
        out
    }
}

/// Sum of squared daily returns within one month.
pub fn realized_variance(daily: &[f64]) -> f64 {
    daily.iter().map(|r| r * r).sum()
}

/// Positive and negative semivariances. The positive leg takes strictly
/// positive returns, the negative leg takes the rest, so the two always add
/// up to the realized variance.
pub fn signed_semivariances(daily: &[f64]) -> (f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for &r in daily {
        if r > 0.0 {
            pos += r * r;
        } else {
            neg += r * r;
        }
    }
    (pos, neg)
}

/// Realized covariance matrix of one month of daily return rows.
pub fn realized_covariance(daily: &DMatrix<f64>) -> DMatrix<f64> {
    let s = daily.ncols();
    let mut rc = DMatrix::zeros(s, s);
    for i in 0..daily.nrows() {
        let x = daily.row(i);
        for a in 0..s {
            for b in a..s {
                rc[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..s {
        for b in (a + 1)..s {
            rc[(b, a)] = rc[(a, b)];
        }
    }
    rc
}

/// Normalizes a realized covariance to a correlation matrix: unit diagonal
/// pinned exactly, off-diagonal entries clamped to [-1, 1] against rounding.
/// Fails when a diagonal entry is not strictly positive.
pub fn realized_correlation_matrix(rcov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = rcov.nrows();
    let mut scale = vec![0.0; s];
    for i in 0..s {
        let v = rcov[(i, i)];
        if !(v > 0.0) {
            return Err(HeavyError::DataQuality(format!(
                "realized variance {v:e} at series {i} cannot be normalized"
            )));
        }
        scale[i] = 1.0 / v.sqrt();
    }
    let mut corr = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            corr[(i, j)] = (rcov[(i, j)] * scale[i] * scale[j]).clamp(-1.0, 1.0);
        }
    }
    pin_unit_diagonal(&mut corr);
    Ok(corr)
}

/// Builds the full set of monthly realized measures from a panel.
pub fn build_measures(panel: &ReturnPanel) -> Result<RealizedMeasures> {
    let t = panel.n_months();
    let k = panel.n_factors();
    let n = panel.n_assets();

    let mut factor_rv = DMatrix::zeros(t, k);
    let mut factor_rv_pos = DMatrix::zeros(t, k);
    let mut factor_rv_neg = DMatrix::zeros(t, k);
    let mut factor_rcov = Vec::with_capacity(t);
    let mut factor_rcorr = Vec::with_capacity(t);
    let mut asset_rv = DMatrix::zeros(t, n);
    let mut asset_rv_pos = DMatrix::zeros(t, n);
    let mut asset_rv_neg = DMatrix::zeros(t, n);
    let mut asset_factor_rcov = Vec::with_capacity(t);
    let mut asset_factor_rcorr = Vec::with_capacity(t);

    for (row, block) in panel.daily.iter().enumerate() {
        let month = panel.months[row];
        let rc_full = realized_covariance(block);

        // Strictly positive realized variances are required everywhere the
        // measures feed a log-likelihood or a normalization.
        for j in 0..(k + n) {
            if !(rc_full[(j, j)] > 0.0) {
                let name = if j < k {
                    &panel.factor_names[j]
                } else {
                    &panel.asset_names[j - k]
                };
                return Err(HeavyError::DegenerateMonth {
                    month: month.to_string(),
                    message: format!("series {name} has zero realized variance"),
                });
            }
        }

        for j in 0..k {
            let col: Vec<f64> = (0..block.nrows()).map(|i| block[(i, j)]).collect();
            let (p, q) = signed_semivariances(&col);
            factor_rv_pos[(row, j)] = p;
            factor_rv_neg[(row, j)] = q;
            factor_rv[(row, j)] = p + q;
        }
        for j in 0..n {
            let col: Vec<f64> = (0..block.nrows()).map(|i| block[(i, k + j)]).collect();
            let (p, q) = signed_semivariances(&col);
            asset_rv_pos[(row, j)] = p;
            asset_rv_neg[(row, j)] = q;
            asset_rv[(row, j)] = p + q;
        }

        let rc_factors = rc_full.view((0, 0), (k, k)).into_owned();
        let rl_factors = realized_correlation_matrix(&rc_factors).map_err(|_| {
            HeavyError::DegenerateMonth {
                month: month.to_string(),
                message: "factor realized covariance cannot be normalized".to_string(),
            }
        })?;

        let mut rc_af = DMatrix::zeros(n, k);
        let mut rl_af = DMatrix::zeros(n, k);
        for i in 0..n {
            for j in 0..k {
                let cov = rc_full[(k + i, j)];
                rc_af[(i, j)] = cov;
                let denom = (rc_full[(k + i, k + i)] * rc_full[(j, j)]).sqrt();
                rl_af[(i, j)] = (cov / denom).clamp(-1.0, 1.0);
            }
        }

        factor_rcov.push(rc_factors);
        factor_rcorr.push(rl_factors);
        asset_factor_rcov.push(rc_af);
        asset_factor_rcorr.push(rl_af);
    }

    Ok(RealizedMeasures {
        months: panel.months.clone(),
        factor_names: panel.factor_names.clone(),
        asset_names: panel.asset_names.clone(),
        factor_rv,
        factor_rv_pos,
        factor_rv_neg,
        factor_rcov,
        factor_rcorr,
        asset_rv,
        asset_rv_pos,
        asset_rv_neg,
        asset_factor_rcov,
        asset_factor_rcorr,
    })
}

/// N x N realized covariance matrices of the assets, used as a forecast
/// evaluation proxy.
pub fn asset_realized_covariances(panel: &ReturnPanel) -> Vec<DMatrix<f64>> {
    let k = panel.n_factors();
    let n = panel.n_assets();
    panel
        .daily
        .iter()
        .map(|block| {
            let rc = realized_covariance(block);
            rc.view((k, k), (n, n)).into_owned()
        })
        .collect()
}

/// Per-series summary of a panel and its measures. Returns and variance
/// measures are annualized by 1200 (monthly decimal to annual percent).
#[derive(Debug, Clone)]
pub struct SeriesSummary {
    pub series: String,
    pub is_factor: bool,
    pub mean_return: f64,
    pub mean_realized_variance: f64,
    pub mean_semivariance_pos: f64,
    pub mean_semivariance_neg: f64,
    pub mean_squared_return: f64,
}

/// Table of annualized summary statistics, factors first.
pub fn summary_stats(panel: &ReturnPanel, measures: &RealizedMeasures) -> Vec<SeriesSummary> {
    let t = panel.n_months() as f64;
    let k = panel.n_factors();
    let mut out = Vec::with_capacity(panel.n_series());
    for j in 0..panel.n_series() {
        let (name, is_factor) = if j < k {
            (panel.factor_names[j].clone(), true)
        } else {
            (panel.asset_names[j - k].clone(), false)
        };
        let rets = panel.monthly.column(j);
        let mean_return = rets.sum() / t * 1200.0;
        let mean_squared_return = rets.iter().map(|r| r * r).sum::<f64>() / t * 1200.0;
        let (rv, pos, neg) = if j < k {
            (
                measures.factor_rv.column(j).sum(),
                measures.factor_rv_pos.column(j).sum(),
                measures.factor_rv_neg.column(j).sum(),
            )
        } else {
            (
                measures.asset_rv.column(j - k).sum(),
                measures.asset_rv_pos.column(j - k).sum(),
                measures.asset_rv_neg.column(j - k).sum(),
            )
        };
        out.push(SeriesSummary {
            series: name,
            is_factor,
            mean_return,
            mean_realized_variance: rv / t * 1200.0,
            mean_semivariance_pos: pos / t * 1200.0,
            mean_semivariance_neg: neg / t * 1200.0,
            mean_squared_return,
        });
    }
    out
}
