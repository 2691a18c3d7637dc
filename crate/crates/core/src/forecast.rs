//! Model orchestration and one-step-ahead covariance forecasting.
//!
//! A fitted model combines the core factor fit, the per-asset fits, the
//! sample means and the shrunk residual covariance. The one-step forecast
//! advances every recursion from the end of an estimation window:
//!
//!   H^c_{T+1} = diag(h_{T+1})^{1/2} R_{T+1} diag(h_{T+1})^{1/2}
//!   beta_{i,T+1} = diag(H^c)^{-1/2} R^{-1} rho_i sqrt(h_i)   (columnwise)
//!   H_hat = B H^c B' + Sigma_eps
//!
//! Estimation of the asymmetric model optionally re-fits the tied
//! (symmetric) model first; its optimum seeds every asymmetric stage and the
//! symmetric parameter set is returned outright if the staged asymmetric
//! estimate were ever to end up below it, so the asymmetric likelihood can
//! never fall below the symmetric one on the same data.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::asset_model::{
    estimate_asset, fisher, fisher_inv, fisher_step, filter_asset, AssetFilteredState,
    AssetModelParams, CORR_OUTPUT_CLAMP,
};
use crate::core_model::{
    aic, bic, correlation_intercept, correlation_step, estimate_core, filter_core, variance_step,
    CoreFilteredState, CoreModelParams, EstimateOptions, FitReport,
};
use crate::error::{HeavyError, Result};
use crate::linalg::{is_pd, min_eigenvalue, symmetrize};
use crate::measures::{build_measures, RealizedMeasures};
use crate::panel::{ReturnPanel, YearMonth};
use crate::shrinkage::{compute_residuals, residual_covariance, ShrinkageKind};

/// Options for a full model fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub estimate: EstimateOptions,
    pub shrinkage: ShrinkageKind,
    /// Re-fit the tied model first and never return an asymmetric estimate
    /// below it. Ignored when the estimate is already symmetric.
    pub nesting_guard: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            estimate: EstimateOptions::default(),
            shrinkage: ShrinkageKind::default(),
            nesting_guard: true,
        }
    }
}

/// A fully estimated hierarchical model.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub label: String,
    pub factor_names: Vec<String>,
    pub asset_names: Vec<String>,
    pub core: CoreModelParams,
    pub assets: Vec<AssetModelParams>,
    pub residual_cov: DMatrix<f64>,
    pub factor_means: DVector<f64>,
    pub asset_means: DVector<f64>,
    pub core_report: FitReport,
    pub asset_reports: Vec<FitReport>,
    pub total_llf: f64,
    pub asymmetric: bool,
    /// True when the asymmetric estimate fell back to the tied optimum.
    pub nesting_fallback: bool,
}

impl FittedModel {
    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / t))
}

fn fit_model_inner(
    panel: &ReturnPanel,
    measures: &RealizedMeasures,
    est: &EstimateOptions,
    shrinkage: ShrinkageKind,
    warm: Option<&FittedModel>,
) -> Result<FittedModel> {
    let factor_returns = panel.factor_returns();
    let asset_returns = panel.asset_returns();
    let n = panel.n_assets();

    let core = estimate_core(&factor_returns, measures, est, warm.map(|w| &w.core))?;

    let asset_fits: Vec<crate::asset_model::AssetFit> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col: Vec<f64> = asset_returns.column(i).iter().cloned().collect();
            estimate_asset(
                i,
                &col,
                measures,
                &core.state,
                est,
                warm.and_then(|w| w.assets.get(i)),
            )
        })
        .collect::<Result<_>>()?;

    let asset_states: Vec<&AssetFilteredState> = asset_fits.iter().map(|f| &f.state).collect();
    let betas = beta_path(&core.state, &asset_states)?;
    let factor_means = column_means(&factor_returns);
    let asset_means = column_means(&asset_returns);
    let residual_cov = if n == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let eps = compute_residuals(&asset_returns, &factor_returns, &betas, &asset_means, &factor_means)?;
        residual_covariance(&eps, shrinkage)?
    };

    let total_llf = core.report.llf + asset_fits.iter().map(|f| f.report.llf).sum::<f64>();
    Ok(FittedModel {
        label: est.label.clone(),
        factor_names: measures.factor_names.clone(),
        asset_names: measures.asset_names.clone(),
        core: core.params,
        assets: asset_fits.iter().map(|f| f.params.clone()).collect(),
        residual_cov,
        factor_means,
        asset_means,
        core_report: core.report,
        asset_reports: asset_fits.into_iter().map(|f| f.report).collect(),
        total_llf,
        asymmetric: est.asymmetric,
        nesting_fallback: false,
    })
}

/// Re-labels a symmetric fit as the asymmetric estimate (the tied point is
/// an admissible asymmetric parameter vector); information criteria are
/// recomputed with the asymmetric parameter counts.
fn relabel_as_asymmetric(mut fit: FittedModel) -> FittedModel {
    let core_k = fit.core.n_free_params(true);
    fit.core_report.n_params = core_k;
    fit.core_report.aic = aic(fit.core_report.llf, core_k, fit.core_report.n_obs);
    fit.core_report.bic = bic(fit.core_report.llf, core_k, fit.core_report.n_obs);
    for r in fit.asset_reports.iter_mut() {
        let k = AssetModelParams::n_free_params(true);
        r.n_params = k;
        r.aic = aic(r.llf, k, r.n_obs);
        r.bic = bic(r.llf, k, r.n_obs);
    }
    fit.asymmetric = true;
    fit.nesting_fallback = true;
    fit
}

/// Fits the full hierarchical model on one window.
pub fn fit_model(
    panel: &ReturnPanel,
    measures: &RealizedMeasures,
    opts: &FitOptions,
) -> Result<FittedModel> {
    if panel.n_months() != measures.n_months() {
        return Err(HeavyError::DimensionMismatch {
            context: "model fit inputs".to_string(),
            expected: format!("{} months", panel.n_months()),
            actual: format!("{} measure months", measures.n_months()),
        });
    }
    if opts.estimate.asymmetric && opts.nesting_guard {
        let mut sym_est = opts.estimate.clone();
        sym_est.asymmetric = false;
        let sym = fit_model_inner(panel, measures, &sym_est, opts.shrinkage, None)?;
        let asym = fit_model_inner(panel, measures, &opts.estimate, opts.shrinkage, Some(&sym))?;
        if asym.total_llf >= sym.total_llf {
            Ok(asym)
        } else {
            Ok(relabel_as_asymmetric(sym))
        }
    } else {
        fit_model_inner(panel, measures, &opts.estimate, opts.shrinkage, None)
    }
}

/// Factor loadings implied by the fitted states at one month:
/// beta_i = diag(h^c)^{-1/2} R^{-1} rho_i sqrt(h_i).
pub fn compute_asset_beta(
    core_variances: &[f64],
    core_corr_chol: &Cholesky<f64, Dyn>,
    rho: &DVector<f64>,
    asset_variance: f64,
) -> DVector<f64> {
    let x = core_corr_chol.solve(rho);
    DVector::from_iterator(
        core_variances.len(),
        core_variances
            .iter()
            .zip(x.iter())
            .map(|(hc, xk)| xk * (asset_variance / hc).sqrt()),
    )
}

/// Beta matrices (N x K) for every month of the filtered paths.
pub fn beta_path(
    core: &CoreFilteredState,
    assets: &[&AssetFilteredState],
) -> Result<Vec<DMatrix<f64>>> {
    let t = core.n_months();
    let k = core.n_factors();
    let n = assets.len();
    let mut out = Vec::with_capacity(t);
    for row in 0..t {
        let chol = Cholesky::new(core.correlations[row].clone()).ok_or_else(|| {
            HeavyError::PdViolation {
                time: row,
                context: "core correlation during beta computation".to_string(),
                min_eigenvalue: min_eigenvalue(&core.correlations[row]),
            }
        })?;
        let h_core: Vec<f64> = (0..k).map(|j| core.variances[(row, j)]).collect();
        let mut b = DMatrix::zeros(n, k);
        for (i, a) in assets.iter().enumerate() {
            let rho = a.correlations.row(row).transpose();
            let beta = compute_asset_beta(&h_core, &chol, &rho, a.variances[row]);
            b.set_row(i, &beta.transpose());
        }
        out.push(b);
    }
    Ok(out)
}

/// One-step-ahead covariance forecast.
#[derive(Debug, Clone)]
pub struct CovarianceForecast {
    /// Month the forecast targets.
    pub month: YearMonth,
    /// Factor covariance H^c_{T+1}, K x K.
    pub factor_cov: DMatrix<f64>,
    /// Factor loadings B_{T+1}, N x K.
    pub beta: DMatrix<f64>,
    /// Residual covariance used in the assembly, N x N.
    pub residual_cov: DMatrix<f64>,
    /// Assembled asset covariance B H^c B' + Sigma_eps, N x N.
    pub asset_cov: DMatrix<f64>,
}

/// Advances every recursion one step past the end of the supplied window
/// and assembles the asset covariance forecast. The window is re-filtered
/// with the model's parameters and targeting moments; initial states are
/// the window's empirical means.
pub fn forecast_one_step(
    model: &FittedModel,
    panel: &ReturnPanel,
    measures: &RealizedMeasures,
    pd_tol: f64,
) -> Result<CovarianceForecast> {
    let k = model.n_factors();
    let n = model.n_assets();
    if panel.n_factors() != k || panel.n_assets() != n {
        return Err(HeavyError::DimensionMismatch {
            context: "forecast window".to_string(),
            expected: format!("{k} factors, {n} assets"),
            actual: format!("{} factors, {} assets", panel.n_factors(), panel.n_assets()),
        });
    }
    let t = panel.n_months();
    let factor_returns = panel.factor_returns();
    let asset_returns = panel.asset_returns();

    let core = filter_core(&model.core, &factor_returns, measures, pd_tol, None)?;
    let last = t - 1;

    // Factor variances one step ahead.
    let mut h_next = vec![0.0; k];
    for j in 0..k {
        let positive = factor_returns[(last, j)] > 0.0;
        h_next[j] = variance_step(
            &model.core.var_eq[j],
            measures.factor_rv[(last, j)],
            positive,
            core.variances[(last, j)],
        );
        if !(h_next[j].is_finite() && h_next[j] > 0.0) {
            return Err(HeavyError::NonFinite {
                time: t,
                context: format!("forecast variance of factor {}", model.factor_names[j]),
            });
        }
    }

    // Factor correlation one step ahead.
    let intercept = correlation_intercept(
        model.core.corr,
        &model.core.corr_target,
        &model.core.realized_corr_target,
    );
    let r_next = correlation_step(
        &intercept,
        model.core.corr,
        &measures.factor_rcorr[last],
        &core.correlations[last],
    );
    if !is_pd(&r_next, pd_tol) {
        return Err(HeavyError::PdViolation {
            time: t,
            context: "forecast factor correlation".to_string(),
            min_eigenvalue: min_eigenvalue(&r_next),
        });
    }
    let r_chol = Cholesky::new(r_next.clone()).ok_or_else(|| HeavyError::PdViolation {
        time: t,
        context: "forecast factor correlation factorization".to_string(),
        min_eigenvalue: min_eigenvalue(&r_next),
    })?;

    let mut factor_cov = r_next.clone();
    for a in 0..k {
        for b in 0..k {
            factor_cov[(a, b)] *= (h_next[a] * h_next[b]).sqrt();
        }
    }

    // Asset states one step ahead.
    let corr_chols: Vec<Cholesky<f64, Dyn>> = core
        .correlations
        .iter()
        .map(|r| Cholesky::new(r.clone()).expect("filtered correlation is PD"))
        .collect();
    let realized_chols: Vec<Cholesky<f64, Dyn>> = core
        .realized_corr_means
        .iter()
        .map(|p| Cholesky::new(p.clone()).expect("filtered realized correlation is PD"))
        .collect();

    let mut beta = DMatrix::zeros(n, k);
    for i in 0..n {
        let v: Vec<f64> = measures.asset_rv.column(i).iter().cloned().collect();
        let v_pos: Vec<f64> = measures.asset_rv_pos.column(i).iter().cloned().collect();
        let v_neg: Vec<f64> = measures.asset_rv_neg.column(i).iter().cloned().collect();
        let rets: Vec<f64> = asset_returns.column(i).iter().cloned().collect();
        let rl = measures.asset_corr_path(i);
        let state = filter_asset(
            &model.assets[i],
            &rets,
            &v,
            &v_pos,
            &v_neg,
            &rl,
            None,
            pd_tol,
            &corr_chols,
            &realized_chols,
        )?;

        let positive = rets[last] > 0.0;
        let h_i = variance_step(
            &model.assets[i].var_eq,
            v[last],
            positive,
            state.variances[last],
        );
        if !(h_i.is_finite() && h_i > 0.0) {
            return Err(HeavyError::NonFinite {
                time: t,
                context: format!("forecast variance of asset {}", model.asset_names[i]),
            });
        }

        let f_rl_last: Vec<f64> = rl
            .row(last)
            .iter()
            .map(|x| fisher(crate::asset_model::clamp_correlation(*x).0))
            .collect();
        let f_prev: Vec<f64> = state
            .correlations
            .row(last)
            .iter()
            .map(|x| fisher(*x))
            .collect();
        let mut f_next = vec![0.0; k];
        fisher_step(&model.assets[i].corr_eq, &f_rl_last, &f_prev, &mut f_next);
        let rho_next = DVector::from_iterator(
            k,
            f_next
                .iter()
                .map(|x| fisher_inv(*x).clamp(-CORR_OUTPUT_CLAMP, CORR_OUTPUT_CLAMP)),
        );
        let q = rho_next.dot(&r_chol.solve(&rho_next));
        if !(q < 1.0 - pd_tol) {
            return Err(HeavyError::PdViolation {
                time: t,
                context: format!(
                    "forecast joint correlation of asset {}",
                    model.asset_names[i]
                ),
                min_eigenvalue: 1.0 - q,
            });
        }
        let b = compute_asset_beta(&h_next, &r_chol, &rho_next, h_i);
        beta.set_row(i, &b.transpose());
    }

    let mut asset_cov = &beta * &factor_cov * beta.transpose() + &model.residual_cov;
    asset_cov = symmetrize(&asset_cov);
    if n > 0 && !is_pd(&asset_cov, pd_tol) {
        return Err(HeavyError::PdViolation {
            time: t,
            context: "forecast asset covariance".to_string(),
            min_eigenvalue: min_eigenvalue(&asset_cov),
        });
    }

    Ok(CovarianceForecast {
        month: panel.months[last].next(),
        factor_cov,
        beta,
        residual_cov: model.residual_cov.clone(),
        asset_cov,
    })
}

/// Rolling one-step forecasts with periodic re-estimation.
#[derive(Debug, Clone)]
pub struct RollingOptions {
    /// Months in each estimation window.
    pub estimation_window: usize,
    /// Re-estimate every this many origins (1 = every month).
    pub reestimate_every: usize,
    pub fit: FitOptions,
    pub pd_tol: f64,
}

#[derive(Debug)]
pub struct RollingOutput {
    pub forecasts: Vec<CovarianceForecast>,
    /// Months at which (re)estimation ran.
    pub refit_months: Vec<YearMonth>,
    /// Carried-forward estimation failures, if any.
    pub warnings: Vec<String>,
}

pub fn rolling_forecasts(panel: &ReturnPanel, opts: &RollingOptions) -> Result<RollingOutput> {
    let t = panel.n_months();
    let w = opts.estimation_window;
    if opts.reestimate_every == 0 {
        return Err(HeavyError::Config(
            "reestimate_every must be at least 1".to_string(),
        ));
    }
    if w < opts.fit.estimate.min_obs {
        return Err(HeavyError::Config(format!(
            "estimation window {w} shorter than the minimum {} months",
            opts.fit.estimate.min_obs
        )));
    }
    if w >= t {
        return Err(HeavyError::Config(format!(
            "estimation window {w} leaves no out-of-sample months out of {t}"
        )));
    }

    let mut forecasts = Vec::with_capacity(t - w);
    let mut refit_months = Vec::new();
    let mut warnings = Vec::new();
    let mut current: Option<FittedModel> = None;

    for s in w..t {
        let window = panel.window(s - w, s)?;
        let measures = build_measures(&window)?;
        if (s - w) % opts.reestimate_every == 0 || current.is_none() {
            match fit_model(&window, &measures, &opts.fit) {
                Ok(fit) => {
                    refit_months.push(panel.months[s]);
                    current = Some(fit);
                }
                Err(e) => {
                    if current.is_none() {
                        return Err(HeavyError::EstimationFailed {
                            stage: "first rolling window".to_string(),
                            message: e.to_string(),
                        });
                    }
                    warnings.push(format!(
                        "estimation at {} failed ({e}); previous parameters carried forward",
                        panel.months[s]
                    ));
                }
            }
        }
        let model = current.as_ref().expect("model present after first fit");
        let mut fc = forecast_one_step(model, &window, &measures, opts.pd_tol)?;
        // Label with the realized next month so evaluation joins cleanly
        // even if the calendar has gaps.
        fc.month = panel.months[s];
        forecasts.push(fc);
    }

    Ok(RollingOutput {
        forecasts,
        refit_months,
        warnings,
    })
}
