//! Portfolio tracking and economic comparison of covariance forecasts.
//!
//! Each month the minimum variance weights implied by the forecast are
//! held for one month. Turnover compares new weights with the previous
//! month's weights after passive drift:
//!
//!   TO_t = sum_i | w_{t,i} - w_{t-1,i} (1 + r_{t-1,i}) / (1 + w_{t-1}' r_{t-1}) |
//!
//! Economic value is a quadratic-utility switching fee: the constant
//! monthly amount Delta that makes an investor with
//! U(r) = (1 + r) - gamma / (2 (1 + gamma)) (1 + r)^2 indifferent between
//! the benchmark track and the candidate track net of the fee.

use nalgebra::{DMatrix, DVector};

use crate::error::{HeavyError, Result};
use crate::eval::gmvp::{gmvp_weights, gmvp_weights_long_only};
use crate::linalg::{mean, sample_std};
use crate::panel::YearMonth;

/// Weight construction policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightPolicy {
    Unconstrained,
    LongOnly,
}

impl WeightPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightPolicy::Unconstrained => "unconstrained",
            WeightPolicy::LongOnly => "long_only",
        }
    }
}

/// Realized monthly track of one forecast-driven portfolio.
#[derive(Debug, Clone)]
pub struct PortfolioTrack {
    pub months: Vec<YearMonth>,
    pub returns: Vec<f64>,
    /// Turnover per month; the initial position is not counted.
    pub turnover: Vec<f64>,
    /// Proportion of assets held short each month.
    pub short_proportion: Vec<f64>,
    pub weights: Vec<DVector<f64>>,
}

/// Builds minimum variance weights from each forecast and applies them to
/// the realized returns of the same month. `realized` is M x N, row m
/// aligned with `forecasts[m]`.
pub fn track_portfolio(
    months: &[YearMonth],
    forecasts: &[DMatrix<f64>],
    realized: &DMatrix<f64>,
    policy: WeightPolicy,
) -> Result<PortfolioTrack> {
    let m = forecasts.len();
    if months.len() != m || realized.nrows() != m || m == 0 {
        return Err(HeavyError::DimensionMismatch {
            context: "portfolio tracking".to_string(),
            expected: format!("{m} aligned months and return rows"),
            actual: format!("{} months, {} rows", months.len(), realized.nrows()),
        });
    }
    let n = realized.ncols();

    let mut returns = Vec::with_capacity(m);
    let mut turnover = Vec::with_capacity(m);
    let mut short_proportion = Vec::with_capacity(m);
    let mut weights: Vec<DVector<f64>> = Vec::with_capacity(m);

    for t in 0..m {
        let h = &forecasts[t];
        if h.nrows() != n {
            return Err(HeavyError::DimensionMismatch {
                context: format!("forecast at {}", months[t]),
                expected: format!("{n} x {n}"),
                actual: format!("{} x {}", h.nrows(), h.ncols()),
            });
        }
        let w = match policy {
            WeightPolicy::Unconstrained => gmvp_weights(h)?,
            WeightPolicy::LongOnly => gmvp_weights_long_only(h)?,
        };
        let r_row = realized.row(t).transpose();
        let rp = w.dot(&r_row);

        let to = if t == 0 {
            0.0
        } else {
            let w_prev = &weights[t - 1];
            let r_prev = realized.row(t - 1).transpose();
            let growth = 1.0 + w_prev.dot(&r_prev);
            if growth.abs() < 1e-12 {
                return Err(HeavyError::DataQuality(format!(
                    "portfolio wiped out in {}; turnover undefined",
                    months[t - 1]
                )));
            }
            let mut acc = 0.0;
            for i in 0..n {
                let drifted = w_prev[i] * (1.0 + r_prev[i]) / growth;
                acc += (w[i] - drifted).abs();
            }
            acc
        };

        let shorts = w.iter().filter(|&&x| x < -1e-12).count();
        returns.push(rp);
        turnover.push(to);
        short_proportion.push(shorts as f64 / n as f64);
        weights.push(w);
    }

    Ok(PortfolioTrack {
        months: months.to_vec(),
        returns,
        turnover,
        short_proportion,
        weights,
    })
}

/// Annualized summary of a monthly track.
#[derive(Debug, Clone)]
pub struct PortfolioSummary {
    /// Mean monthly return times 12.
    pub annualized_return: f64,
    /// Sample standard deviation times sqrt(12).
    pub annualized_sd: f64,
    /// Annualized return over annualized standard deviation.
    pub information_ratio: f64,
    /// Mean turnover excluding the first month.
    pub mean_turnover: f64,
    pub mean_short_proportion: f64,
}

pub fn summarize_track(track: &PortfolioTrack) -> PortfolioSummary {
    let ar = mean(&track.returns) * 12.0;
    let sd = sample_std(&track.returns) * 12f64.sqrt();
    let ir = if sd > 0.0 { ar / sd } else { 0.0 };
    let mean_to = if track.turnover.len() > 1 {
        mean(&track.turnover[1..])
    } else {
        0.0
    };
    PortfolioSummary {
        annualized_return: ar,
        annualized_sd: sd,
        information_ratio: ir,
        mean_turnover: mean_to,
        mean_short_proportion: mean(&track.short_proportion),
    }
}

/// Quadratic utility U(r) = (1 + r) - gamma / (2 (1 + gamma)) (1 + r)^2.
pub fn quadratic_utility(r: f64, gamma: f64) -> f64 {
    let g = 1.0 + r;
    g - gamma / (2.0 * (1.0 + gamma)) * g * g
}

fn mean_utility(returns: &[f64], gamma: f64, fee: f64) -> f64 {
    returns
        .iter()
        .map(|r| quadratic_utility(r - fee, gamma))
        .sum::<f64>()
        / returns.len() as f64
}

/// Monthly switching fee: the Delta that solves
/// mean U(candidate - Delta) = mean U(benchmark). Positive means the
/// candidate track is worth paying for.
///
/// Mean quadratic utility is exactly quadratic in Delta, so the equation
/// is solved in closed form; of its two roots the one continuous in the
/// utility gap at zero is returned, which makes identical tracks yield
/// exactly zero. A root may not exist when the candidate is so much worse
/// that no fee (even a subsidy) equalizes the tracks; that is an error.
pub fn utility_fee(benchmark: &[f64], candidate: &[f64], gamma: f64) -> Result<f64> {
    if benchmark.is_empty() || candidate.is_empty() {
        return Err(HeavyError::DataQuality(
            "utility fee needs non-empty return tracks".to_string(),
        ));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(HeavyError::InvalidParameter {
            name: "gamma".to_string(),
            message: format!("risk aversion must be positive and finite, got {gamma}"),
        });
    }
    let c = gamma / (2.0 * (1.0 + gamma));
    let target = mean_utility(benchmark, gamma, 0.0);
    let mean_c = mean_utility(candidate, gamma, 0.0);
    let mean_gross =
        candidate.iter().map(|&r| 1.0 + r).sum::<f64>() / candidate.len() as f64;

    // mean U(candidate - d) = mean_c + b d + a d^2.
    let a = -c;
    let b = 2.0 * c * mean_gross - 1.0;
    let e = mean_c - target;
    if b >= 0.0 {
        // Mean gross return at or beyond the utility vertex (1 + gamma) /
        // gamma: utility no longer decreases in the fee there.
        return Err(HeavyError::DataQuality(format!(
            "mean candidate gross return {mean_gross} sits beyond the utility vertex; \
             the switching fee is not identified"
        )));
    }
    let disc = b * b - 4.0 * a * e;
    if disc < 0.0 {
        return Err(HeavyError::DataQuality(
            "no fee equalizes the tracks: the candidate cannot reach the benchmark utility"
                .to_string(),
        ));
    }
    let mut delta = 2.0 * e / (-b + disc.sqrt());
    // Newton polish of the same quadratic to machine precision.
    for _ in 0..2 {
        let slope = b + 2.0 * a * delta;
        if slope == 0.0 {
            break;
        }
        delta -= (e + (b + a * delta) * delta) / slope;
    }
    Ok(delta)
}
