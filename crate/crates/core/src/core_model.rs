//! Marginal model for the K factors.
//!
//! Conditional variances and correlations follow asymmetric HEAVY
//! recursions driven by realized measures:
//!
//!   h_t = w_h + A_h^+ v_{t-1} o 1{r_{t-1} > 0} + A_h^- v_{t-1} o 1{r_{t-1} <= 0} + B_h h_{t-1}
//!   R_t = (1 - b_R) R_bar - a_R P_bar + a_R RL_{t-1} + b_R R_{t-1}
//!
//! and the conditional means of the realized measures follow
//!
//!   m_t = w_m + A_m^+ v^+_{t-1} + A_m^- v^-_{t-1} + B_m m_{t-1}
//!   P_t = (1 - a_P - b_P) P_bar + a_P RL_{t-1} + b_P P_{t-1}
//!
//! where v^+/v^- are signed semivariances and RL is the realized
//! correlation matrix. Estimation is quasi-maximum-likelihood in four
//! stages: per-factor conditional variances, conditional correlations,
//! per-factor realized-variance means, realized-correlation means.
//!
//! The symmetric restriction ties the +/- coefficients, which reproduces
//! the unsplit recursions exactly because v = v^+ + v^- holds exactly in
//! the stored measures.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{HeavyError, Result};
use crate::linalg::{
    cov_to_corr, is_pd, log_det_from_cholesky, mean, min_eigenvalue, pin_unit_diagonal,
};
use crate::measures::RealizedMeasures;
use crate::optim::{maximize, Bounds, OptimOptions};

/// One scalar variance recursion: intercept + signed arch terms +
/// persistence. The symmetric restriction sets `arch_pos == arch_neg`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEqParams {
    pub intercept: f64,
    pub arch_pos: f64,
    pub arch_neg: f64,
    pub persistence: f64,
}

impl VarianceEqParams {
    pub fn symmetric(intercept: f64, arch: f64, persistence: f64) -> Self {
        VarianceEqParams {
            intercept,
            arch_pos: arch,
            arch_neg: arch,
            persistence,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let vals = [
            ("intercept", self.intercept),
            ("arch_pos", self.arch_pos),
            ("arch_neg", self.arch_neg),
            ("persistence", self.persistence),
        ];
        for (field, v) in vals {
            if !v.is_finite() || v < 0.0 {
                return Err(HeavyError::InvalidParameter {
                    name: format!("{name}.{field}"),
                    message: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if self.persistence >= 1.0 {
            return Err(HeavyError::InvalidParameter {
                name: format!("{name}.persistence"),
                message: format!("must be < 1, got {}", self.persistence),
            });
        }
        Ok(())
    }
}

/// Scalar coefficients of a correlation-matrix recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Full parameter set of the core factor model, including the targeting
/// moments (which are estimated moments, not counted as free parameters).
#[derive(Debug, Clone)]
pub struct CoreModelParams {
    /// Conditional variance recursions, one per factor.
    pub var_eq: Vec<VarianceEqParams>,
    /// Conditional correlation recursion (alpha_R, beta_R).
    pub corr: CorrParams,
    /// Realized-variance mean recursions, one per factor.
    pub realized_var_eq: Vec<VarianceEqParams>,
    /// Realized-correlation mean recursion (alpha_P, beta_P).
    pub realized_corr: CorrParams,
    /// R_bar: targeting moment of the conditional correlations.
    pub corr_target: DMatrix<f64>,
    /// P_bar: targeting moment of the realized correlations.
    pub realized_corr_target: DMatrix<f64>,
}

impl CoreModelParams {
    pub fn n_factors(&self) -> usize {
        self.var_eq.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_factors();
        if self.realized_var_eq.len() != k {
            return Err(HeavyError::DimensionMismatch {
                context: "core model realized variance equations".to_string(),
                expected: format!("{k}"),
                actual: format!("{}", self.realized_var_eq.len()),
            });
        }
        for (j, eq) in self.var_eq.iter().enumerate() {
            eq.validate(&format!("var_eq[{j}]"))?;
        }
        for (j, eq) in self.realized_var_eq.iter().enumerate() {
            eq.validate(&format!("realized_var_eq[{j}]"))?;
            if eq.arch_pos.max(eq.arch_neg) + eq.persistence >= 1.0 {
                return Err(HeavyError::InvalidParameter {
                    name: format!("realized_var_eq[{j}]"),
                    message: "max(arch_pos, arch_neg) + persistence must be < 1".to_string(),
                });
            }
        }
        for (name, c) in [("corr", self.corr), ("realized_corr", self.realized_corr)] {
            if !(c.alpha >= 0.0 && c.beta >= 0.0 && c.alpha + c.beta < 1.0) {
                return Err(HeavyError::InvalidParameter {
                    name: name.to_string(),
                    message: format!(
                        "alpha, beta must be non-negative with alpha + beta < 1, got ({}, {})",
                        c.alpha, c.beta
                    ),
                });
            }
        }
        for (name, m) in [
            ("corr_target", &self.corr_target),
            ("realized_corr_target", &self.realized_corr_target),
        ] {
            if m.nrows() != k || m.ncols() != k {
                return Err(HeavyError::DimensionMismatch {
                    context: name.to_string(),
                    expected: format!("{k} x {k}"),
                    actual: format!("{} x {}", m.nrows(), m.ncols()),
                });
            }
            if !is_pd(m, 1e-12) {
                return Err(HeavyError::InvalidParameter {
                    name: name.to_string(),
                    message: "targeting matrix is not positive definite".to_string(),
                });
            }
            for i in 0..k {
                if (m[(i, i)] - 1.0).abs() > 1e-12 {
                    return Err(HeavyError::InvalidParameter {
                        name: name.to_string(),
                        message: "targeting matrix must have unit diagonal".to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Flat parameter records, 8K + 4 entries: the four correlation
    /// coefficients are always serialized, fixed at zero when K = 1.
    pub fn param_records(&self, factor_names: &[String], boxes: &CoreBoxes) -> Vec<ParamRecord> {
        let mut out = Vec::with_capacity(8 * self.n_factors() + 4);
        for (j, eq) in self.var_eq.iter().enumerate() {
            push_eq_records(
                &mut out,
                "var",
                &factor_names[j],
                eq,
                boxes.var_intercept_hi[j],
                boxes,
            );
        }
        out.push(ParamRecord::new("corr_alpha", "factors", self.corr.alpha, 0.0, boxes.corr_hi));
        out.push(ParamRecord::new("corr_beta", "factors", self.corr.beta, 0.0, boxes.corr_hi));
        for (j, eq) in self.realized_var_eq.iter().enumerate() {
            push_eq_records(
                &mut out,
                "realized_var",
                &factor_names[j],
                eq,
                boxes.realized_var_intercept_hi[j],
                boxes,
            );
        }
        out.push(ParamRecord::new(
            "realized_corr_alpha",
            "factors",
            self.realized_corr.alpha,
            0.0,
            boxes.corr_hi,
        ));
        out.push(ParamRecord::new(
            "realized_corr_beta",
            "factors",
            self.realized_corr.beta,
            0.0,
            boxes.corr_hi,
        ));
        out
    }

    /// Free parameters behind the core likelihood: the tied +/- arch
    /// coefficients count once under the symmetric restriction, and the
    /// correlation recursions contribute none when K = 1.
    pub fn n_free_params(&self, asymmetric: bool) -> usize {
        let k = self.n_factors();
        let per_eq = if asymmetric { 4 } else { 3 };
        let corr = if k >= 2 { 4 } else { 0 };
        2 * per_eq * k + corr
    }
}

fn push_eq_records(
    out: &mut Vec<ParamRecord>,
    prefix: &str,
    series: &str,
    eq: &VarianceEqParams,
    intercept_hi: f64,
    boxes: &CoreBoxes,
) {
    out.push(ParamRecord::new(
        &format!("{prefix}_intercept"),
        series,
        eq.intercept,
        0.0,
        intercept_hi,
    ));
    out.push(ParamRecord::new(
        &format!("{prefix}_arch_pos"),
        series,
        eq.arch_pos,
        0.0,
        boxes.arch_hi,
    ));
    out.push(ParamRecord::new(
        &format!("{prefix}_arch_neg"),
        series,
        eq.arch_neg,
        0.0,
        boxes.arch_hi,
    ));
    out.push(ParamRecord::new(
        &format!("{prefix}_persistence"),
        series,
        eq.persistence,
        0.0,
        boxes.persistence_hi,
    ));
}

/// One serialized parameter with the box used during estimation.
#[derive(Debug, Clone)]
pub struct ParamRecord {
    pub name: String,
    pub series: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParamRecord {
    pub fn new(name: &str, series: &str, value: f64, lower: f64, upper: f64) -> Self {
        ParamRecord {
            name: name.to_string(),
            series: series.to_string(),
            value,
            lower,
            upper,
        }
    }
}

/// Box bounds used for the core stages; intercept caps are data-driven.
#[derive(Debug, Clone)]
pub struct CoreBoxes {
    pub var_intercept_hi: Vec<f64>,
    pub realized_var_intercept_hi: Vec<f64>,
    pub arch_hi: f64,
    pub persistence_hi: f64,
    pub corr_hi: f64,
}

impl CoreBoxes {
    pub fn defaults(k: usize) -> Self {
        CoreBoxes {
            var_intercept_hi: vec![10.0; k],
            realized_var_intercept_hi: vec![10.0; k],
            arch_hi: 3.0,
            persistence_hi: 0.9989,
            corr_hi: 0.999,
        }
    }

    /// Intercept caps at ten times the average realized variance of each
    /// factor; generous relative to any plausible fixed point.
    pub fn from_measures(measures: &RealizedMeasures) -> Self {
        let k = measures.n_factors();
        let t = measures.n_months() as f64;
        let caps: Vec<f64> = (0..k)
            .map(|j| 10.0 * measures.factor_rv.column(j).sum() / t)
            .collect();
        CoreBoxes {
            var_intercept_hi: caps.clone(),
            realized_var_intercept_hi: caps,
            arch_hi: 3.0,
            persistence_hi: 0.9989,
            corr_hi: 0.999,
        }
    }
}

/// Explicit initial state for the filters. Defaults (None) are the
/// empirical means: h_1 = m_1 = mean(v), R_1 = R_bar, P_1 = P_bar.
#[derive(Debug, Clone)]
pub struct CoreInit {
    pub variance: Vec<f64>,
    pub corr: DMatrix<f64>,
    pub realized_var: Vec<f64>,
    pub realized_corr: DMatrix<f64>,
}

/// Filtered paths of the core model.
#[derive(Debug, Clone)]
pub struct CoreFilteredState {
    /// Conditional variances h_t, T x K.
    pub variances: DMatrix<f64>,
    /// Conditional correlations R_t.
    pub correlations: Vec<DMatrix<f64>>,
    /// Degarched returns u_t = r_t / sqrt(h_t), T x K.
    pub degarched: DMatrix<f64>,
    /// Realized-variance means m_t, T x K.
    pub realized_var_means: DMatrix<f64>,
    /// Realized-correlation means P_t.
    pub realized_corr_means: Vec<DMatrix<f64>>,
    /// Conditional covariances H_t = diag(h)^{1/2} R diag(h)^{1/2}.
    pub covariances: Vec<DMatrix<f64>>,
}

impl CoreFilteredState {
    pub fn n_months(&self) -> usize {
        self.variances.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.variances.ncols()
    }
}

/// True when a return counts as a positive month for the sign split.
/// Zero returns go to the negative leg.
pub fn positive_signs(returns: &[f64]) -> Vec<bool> {
    returns.iter().map(|r| *r > 0.0).collect()
}

/// One step of the conditional variance recursion.
pub fn variance_step(eq: &VarianceEqParams, v_prev: f64, positive_prev: bool, h_prev: f64) -> f64 {
    let arch = if positive_prev { eq.arch_pos } else { eq.arch_neg };
    eq.intercept + arch * v_prev + eq.persistence * h_prev
}

/// Conditional variance path. `init` overrides the default h_1 = mean(v).
pub fn filter_variance_path(
    eq: &VarianceEqParams,
    v: &[f64],
    positive: &[bool],
    init: Option<f64>,
) -> Result<Vec<f64>> {
    if v.len() != positive.len() || v.is_empty() {
        return Err(HeavyError::DimensionMismatch {
            context: "variance filter inputs".to_string(),
            expected: format!("{} sign flags, at least one observation", v.len()),
            actual: format!("{}", positive.len()),
        });
    }
    let mut h = Vec::with_capacity(v.len());
    h.push(init.unwrap_or_else(|| mean(v)));
    for t in 1..v.len() {
        h.push(variance_step(eq, v[t - 1], positive[t - 1], h[t - 1]));
    }
    for (t, x) in h.iter().enumerate() {
        if !(x.is_finite() && *x > 0.0) {
            return Err(HeavyError::NonFinite {
                time: t,
                context: "conditional variance path".to_string(),
            });
        }
    }
    Ok(h)
}

/// One step of the realized-variance mean recursion.
pub fn realized_mean_step(eq: &VarianceEqParams, v_pos_prev: f64, v_neg_prev: f64, m_prev: f64) -> f64 {
    eq.intercept + eq.arch_pos * v_pos_prev + eq.arch_neg * v_neg_prev + eq.persistence * m_prev
}

/// Realized-variance mean path. `init` overrides m_1 = mean(v_pos + v_neg).
pub fn filter_realized_mean_path(
    eq: &VarianceEqParams,
    v_pos: &[f64],
    v_neg: &[f64],
    init: Option<f64>,
) -> Result<Vec<f64>> {
    if v_pos.len() != v_neg.len() || v_pos.is_empty() {
        return Err(HeavyError::DimensionMismatch {
            context: "realized mean filter inputs".to_string(),
            expected: format!("{} negative semivariances", v_pos.len()),
            actual: format!("{}", v_neg.len()),
        });
    }
    let mut m = Vec::with_capacity(v_pos.len());
    let default_init = || {
        let total: f64 = v_pos.iter().zip(v_neg).map(|(p, n)| p + n).sum();
        total / v_pos.len() as f64
    };
    m.push(init.unwrap_or_else(default_init));
    for t in 1..v_pos.len() {
        m.push(realized_mean_step(eq, v_pos[t - 1], v_neg[t - 1], m[t - 1]));
    }
    for (t, x) in m.iter().enumerate() {
        if !(x.is_finite() && *x > 0.0) {
            return Err(HeavyError::NonFinite {
                time: t,
                context: "realized variance mean path".to_string(),
            });
        }
    }
    Ok(m)
}

/// Intercept of the targeted conditional correlation recursion:
/// (1 - beta) R_bar - alpha P_bar.
pub fn correlation_intercept(
    corr: CorrParams,
    r_target: &DMatrix<f64>,
    p_target: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = r_target * (1.0 - corr.beta);
    out -= p_target * corr.alpha;
    out
}

/// One step of the conditional correlation recursion; diagonal pinned.
pub fn correlation_step(
    intercept: &DMatrix<f64>,
    corr: CorrParams,
    rl_prev: &DMatrix<f64>,
    r_prev: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut next = intercept.clone();
    next += rl_prev * corr.alpha;
    next += r_prev * corr.beta;
    pin_unit_diagonal(&mut next);
    next
}

/// Conditional correlation path with per-step positive definiteness
/// checks. `init` overrides R_1 = R_bar.
pub fn filter_correlation_path(
    corr: CorrParams,
    r_target: &DMatrix<f64>,
    p_target: &DMatrix<f64>,
    rl: &[DMatrix<f64>],
    init: Option<&DMatrix<f64>>,
    pd_tol: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if rl.is_empty() {
        return Err(HeavyError::DataQuality(
            "empty realized correlation sequence".to_string(),
        ));
    }
    let intercept = correlation_intercept(corr, r_target, p_target);
    let mut path = Vec::with_capacity(rl.len());
    path.push(init.unwrap_or(r_target).clone());
    for t in 1..rl.len() {
        let next = correlation_step(&intercept, corr, &rl[t - 1], &path[t - 1]);
        path.push(next);
    }
    for (t, r) in path.iter().enumerate() {
        if !is_pd(r, pd_tol) {
            return Err(HeavyError::PdViolation {
                time: t,
                context: "conditional correlation path".to_string(),
                min_eigenvalue: min_eigenvalue(r),
            });
        }
    }
    Ok(path)
}

/// One step of the realized-correlation mean recursion; diagonal pinned.
pub fn realized_corr_step(
    corr: CorrParams,
    p_target: &DMatrix<f64>,
    rl_prev: &DMatrix<f64>,
    p_prev: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut next = p_target * (1.0 - corr.alpha - corr.beta);
    next += rl_prev * corr.alpha;
    next += p_prev * corr.beta;
    pin_unit_diagonal(&mut next);
    next
}

/// Realized-correlation mean path with PD checks; `init` overrides
/// P_1 = P_bar.
pub fn filter_realized_corr_path(
    corr: CorrParams,
    p_target: &DMatrix<f64>,
    rl: &[DMatrix<f64>],
    init: Option<&DMatrix<f64>>,
    pd_tol: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if rl.is_empty() {
        return Err(HeavyError::DataQuality(
            "empty realized correlation sequence".to_string(),
        ));
    }
    let mut path = Vec::with_capacity(rl.len());
    path.push(init.unwrap_or(p_target).clone());
    for t in 1..rl.len() {
        let next = realized_corr_step(corr, p_target, &rl[t - 1], &path[t - 1]);
        path.push(next);
    }
    for (t, p) in path.iter().enumerate() {
        if !is_pd(p, pd_tol) {
            return Err(HeavyError::PdViolation {
                time: t,
                context: "realized correlation mean path".to_string(),
                min_eigenvalue: min_eigenvalue(p),
            });
        }
    }
    Ok(path)
}

/// Empirical targeting moments: R_bar is the unit-diagonal normalization
/// of the second moment of the degarched returns, P_bar the elementwise
/// mean of the realized correlation matrices.
pub fn empirical_corr_targets(
    u: &DMatrix<f64>,
    rl: &[DMatrix<f64>],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = u.nrows();
    let k = u.ncols();
    if rl.len() != t || t == 0 {
        return Err(HeavyError::DimensionMismatch {
            context: "correlation targets".to_string(),
            expected: format!("{t} realized correlation matrices"),
            actual: format!("{}", rl.len()),
        });
    }
    let second_moment = u.transpose() * u / t as f64;
    let r_bar = cov_to_corr(&second_moment)?;
    let mut p_bar = DMatrix::zeros(k, k);
    for m in rl {
        p_bar += m;
    }
    p_bar /= t as f64;
    pin_unit_diagonal(&mut p_bar);
    Ok((r_bar, p_bar))
}

/// Runs all four filters with one parameter set.
pub fn filter_core(
    params: &CoreModelParams,
    returns: &DMatrix<f64>,
    measures: &RealizedMeasures,
    pd_tol: f64,
    init: Option<&CoreInit>,
) -> Result<CoreFilteredState> {
    let t = returns.nrows();
    let k = params.n_factors();
    if returns.ncols() != k || measures.n_factors() != k || measures.n_months() != t {
        return Err(HeavyError::DimensionMismatch {
            context: "core filter inputs".to_string(),
            expected: format!("{t} months x {k} factors"),
            actual: format!(
                "returns {} x {}, measures {} x {}",
                returns.nrows(),
                returns.ncols(),
                measures.n_months(),
                measures.n_factors()
            ),
        });
    }

    let mut variances = DMatrix::zeros(t, k);
    let mut realized_var_means = DMatrix::zeros(t, k);
    for j in 0..k {
        let v: Vec<f64> = measures.factor_rv.column(j).iter().cloned().collect();
        let v_pos: Vec<f64> = measures.factor_rv_pos.column(j).iter().cloned().collect();
        let v_neg: Vec<f64> = measures.factor_rv_neg.column(j).iter().cloned().collect();
        let rets: Vec<f64> = returns.column(j).iter().cloned().collect();
        let positive = positive_signs(&rets);
        let h = filter_variance_path(
            &params.var_eq[j],
            &v,
            &positive,
            init.map(|i| i.variance[j]),
        )?;
        let m = filter_realized_mean_path(
            &params.realized_var_eq[j],
            &v_pos,
            &v_neg,
            init.map(|i| i.realized_var[j]),
        )?;
        for row in 0..t {
            variances[(row, j)] = h[row];
            realized_var_means[(row, j)] = m[row];
        }
    }

    let correlations = filter_correlation_path(
        params.corr,
        &params.corr_target,
        &params.realized_corr_target,
        &measures.factor_rcorr,
        init.map(|i| &i.corr),
        pd_tol,
    )?;
    let realized_corr_means = filter_realized_corr_path(
        params.realized_corr,
        &params.realized_corr_target,
        &measures.factor_rcorr,
        init.map(|i| &i.realized_corr),
        pd_tol,
    )?;

    let mut degarched = DMatrix::zeros(t, k);
    for row in 0..t {
        for j in 0..k {
            degarched[(row, j)] = returns[(row, j)] / variances[(row, j)].sqrt();
        }
    }

    let mut covariances = Vec::with_capacity(t);
    for (row, r) in correlations.iter().enumerate() {
        let mut cov = r.clone();
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] *= (variances[(row, a)] * variances[(row, b)]).sqrt();
            }
        }
        if !is_pd(&cov, pd_tol) {
            return Err(HeavyError::PdViolation {
                time: row,
                context: "conditional covariance path".to_string(),
                min_eigenvalue: min_eigenvalue(&cov),
            });
        }
        covariances.push(cov);
    }

    Ok(CoreFilteredState {
        variances,
        correlations,
        degarched,
        realized_var_means,
        realized_corr_means,
        covariances,
    })
}

// ---------------------------------------------------------------------------
// Quasi-likelihoods. All of these return -inf at infeasible points.
// ---------------------------------------------------------------------------

/// Gaussian QML of one factor's conditional variance recursion:
/// -1/2 sum [ log h_t + r_t^2 / h_t ].
pub fn llf_variance_series(eq: &VarianceEqParams, v: &[f64], returns: &[f64]) -> f64 {
    if v.len() != returns.len() {
        return f64::NEG_INFINITY;
    }
    let positive = positive_signs(returns);
    let h = match filter_variance_path(eq, v, &positive, None) {
        Ok(h) => h,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut acc = 0.0;
    for (t, ht) in h.iter().enumerate() {
        acc += ht.ln() + returns[t] * returns[t] / ht;
    }
    if acc.is_finite() {
        -0.5 * acc
    } else {
        f64::NEG_INFINITY
    }
}

/// Sum of the per-factor conditional variance QMLs.
pub fn llf_variances(
    eqs: &[VarianceEqParams],
    rv: &DMatrix<f64>,
    returns: &DMatrix<f64>,
) -> f64 {
    if eqs.len() != rv.ncols() || returns.ncols() != rv.ncols() || returns.nrows() != rv.nrows() {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for (j, eq) in eqs.iter().enumerate() {
        let v: Vec<f64> = rv.column(j).iter().cloned().collect();
        let r: Vec<f64> = returns.column(j).iter().cloned().collect();
        total += llf_variance_series(eq, &v, &r);
    }
    total
}

/// Gaussian QML of the conditional correlations:
/// -1/2 sum [ log|R_t| + u_t' R_t^{-1} u_t ].
pub fn llf_correlations(
    corr: CorrParams,
    r_target: &DMatrix<f64>,
    p_target: &DMatrix<f64>,
    u: &DMatrix<f64>,
    rl: &[DMatrix<f64>],
    pd_tol: f64,
) -> f64 {
    let path = match filter_correlation_path(corr, r_target, p_target, rl, None, pd_tol) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut acc = 0.0;
    for (t, r) in path.iter().enumerate() {
        let chol = match Cholesky::new(r.clone()) {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let ut = u.row(t).transpose();
        let solved = chol.solve(&ut);
        acc += log_det_from_cholesky(&chol) + ut.dot(&solved);
    }
    if acc.is_finite() {
        -0.5 * acc
    } else {
        f64::NEG_INFINITY
    }
}

/// Wishart (nu = 1) QML of one factor's realized-variance mean:
/// -1/2 sum [ log m_t + v_t / m_t ].
pub fn llf_realized_variance_series(
    eq: &VarianceEqParams,
    v_pos: &[f64],
    v_neg: &[f64],
    v: &[f64],
) -> f64 {
    if v.len() != v_pos.len() || v.len() != v_neg.len() {
        return f64::NEG_INFINITY;
    }
    let m = match filter_realized_mean_path(eq, v_pos, v_neg, None) {
        Ok(m) => m,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut acc = 0.0;
    for (t, mt) in m.iter().enumerate() {
        acc += mt.ln() + v[t] / mt;
    }
    if acc.is_finite() {
        -0.5 * acc
    } else {
        f64::NEG_INFINITY
    }
}

/// Sum of the per-factor realized-variance QMLs.
pub fn llf_realized_variances(
    eqs: &[VarianceEqParams],
    rv_pos: &DMatrix<f64>,
    rv_neg: &DMatrix<f64>,
    rv: &DMatrix<f64>,
) -> f64 {
    if eqs.len() != rv.ncols() {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for (j, eq) in eqs.iter().enumerate() {
        let p: Vec<f64> = rv_pos.column(j).iter().cloned().collect();
        let n: Vec<f64> = rv_neg.column(j).iter().cloned().collect();
        let v: Vec<f64> = rv.column(j).iter().cloned().collect();
        total += llf_realized_variance_series(eq, &p, &n, &v);
    }
    total
}

/// Scales a realized covariance by the fitted realized-variance means:
/// S_t = diag(m_t)^{-1/2} RC_t diag(m_t)^{-1/2}.
fn scale_by_means(rc: &DMatrix<f64>, m_row: &[f64]) -> DMatrix<f64> {
    let k = rc.nrows();
    let mut s = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            s[(i, j)] = rc[(i, j)] / (m_row[i] * m_row[j]).sqrt();
        }
    }
    s
}

/// Wishart (nu = 1) QML of the realized-correlation means:
/// -1/2 sum [ log|P_t| + tr((P_t^{-1} - I) S_t) ] with
/// S_t = diag(m_hat_t)^{-1/2} RC_t diag(m_hat_t)^{-1/2}.
pub fn llf_realized_correlations(
    corr: CorrParams,
    p_target: &DMatrix<f64>,
    m_hat: &DMatrix<f64>,
    rc: &[DMatrix<f64>],
    rl: &[DMatrix<f64>],
    pd_tol: f64,
) -> f64 {
    if rc.len() != rl.len() || m_hat.nrows() != rc.len() {
        return f64::NEG_INFINITY;
    }
    let scaled: Vec<DMatrix<f64>> = rc
        .iter()
        .enumerate()
        .map(|(t, rct)| {
            let row: Vec<f64> = m_hat.row(t).iter().cloned().collect();
            scale_by_means(rct, &row)
        })
        .collect();
    llf_realized_correlations_scaled(corr, p_target, &scaled, rl, pd_tol)
}

/// Fast path over pre-scaled matrices; used by the estimation stage so the
/// scaling happens once, not per objective evaluation.
pub(crate) fn llf_realized_correlations_scaled(
    corr: CorrParams,
    p_target: &DMatrix<f64>,
    scaled_rc: &[DMatrix<f64>],
    rl: &[DMatrix<f64>],
    pd_tol: f64,
) -> f64 {
    let path = match filter_realized_corr_path(corr, p_target, rl, None, pd_tol) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut acc = 0.0;
    for (t, p) in path.iter().enumerate() {
        let chol = match Cholesky::new(p.clone()) {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let s = &scaled_rc[t];
        // tr((P^{-1} - I) S) = tr(P^{-1} S) - tr(S)
        let solved = chol.solve(s);
        acc += log_det_from_cholesky(&chol) + solved.trace() - s.trace();
    }
    if acc.is_finite() {
        -0.5 * acc
    } else {
        f64::NEG_INFINITY
    }
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Options shared by the core and asset estimation stages.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// Report label, typically the variant name.
    pub label: String,
    /// Multi-start count per stage.
    pub starts: usize,
    pub seed: u64,
    /// False ties the +/- arch coefficients (symmetric variant).
    pub asymmetric: bool,
    /// Positive definiteness tolerance for filtered correlation paths.
    pub pd_tol: f64,
    /// Feasibility cap: realized-mean recursions require
    /// max(arch_pos, arch_neg) + persistence below this, correlation
    /// recursions require alpha + beta below it.
    pub persistence_cap: f64,
    /// Minimum number of months required to estimate.
    pub min_obs: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            label: "model".to_string(),
            starts: 5,
            seed: 1,
            asymmetric: true,
            pd_tol: crate::linalg::PD_TOL,
            persistence_cap: 0.999,
            min_obs: 60,
        }
    }
}

/// Per-stage optimization summary.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub name: String,
    pub llf: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Fit summary with the information criteria in per-observation form:
/// AIC = (-2 LLF + 2k) / T, BIC = (-2 LLF + k ln T) / T.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub label: String,
    pub llf: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub stages: Vec<StageReport>,
    pub params: Vec<ParamRecord>,
}

pub fn aic(llf: f64, n_params: usize, n_obs: usize) -> f64 {
    (-2.0 * llf + 2.0 * n_params as f64) / n_obs as f64
}

pub fn bic(llf: f64, n_params: usize, n_obs: usize) -> f64 {
    (-2.0 * llf + n_params as f64 * (n_obs as f64).ln()) / n_obs as f64
}

/// A fitted core model.
#[derive(Debug, Clone)]
pub struct CoreFit {
    pub params: CoreModelParams,
    pub state: CoreFilteredState,
    pub report: FitReport,
}

/// Deterministic per-stage seed derivation (splitmix64 mix).
pub(crate) fn stage_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn clamp_into(theta: &mut [f64], bounds: &[Bounds]) {
    for (x, b) in theta.iter_mut().zip(bounds) {
        let w = b.hi - b.lo;
        *x = x.clamp(b.lo + 1e-9 * w, b.hi - 1e-9 * w);
    }
}

/// Solves one variance-type stage (conditional or realized mean). Under
/// the asymmetric flag a symmetric prefit supplies an extra start so the
/// asymmetric optimum can never fall below the tied one.
pub(crate) struct VarianceStageSpec<'a> {
    pub name: String,
    pub intercept_hi: f64,
    pub persistence_hi: f64,
    pub arch_hi: f64,
    /// -inf guard: max(arch) + persistence must stay below this; infinity
    /// disables the joint cap (conditional variance equations).
    pub joint_cap: f64,
    pub heuristic: VarianceEqParams,
    pub warm: Option<&'a VarianceEqParams>,
}

pub(crate) fn estimate_variance_stage(
    objective: &dyn Fn(&VarianceEqParams) -> f64,
    spec: &VarianceStageSpec,
    opts: &EstimateOptions,
    seed: u64,
) -> Result<(VarianceEqParams, StageReport)> {
    let cap = spec.joint_cap;
    let guard = move |eq: &VarianceEqParams| -> f64 {
        if eq.arch_pos.max(eq.arch_neg) + eq.persistence >= cap {
            f64::NEG_INFINITY
        } else {
            objective(eq)
        }
    };

    let sym_bounds = vec![
        Bounds::new(0.0, spec.intercept_hi),
        Bounds::new(0.0, spec.arch_hi),
        Bounds::new(0.0, spec.persistence_hi),
    ];
    let sym_obj = |theta: &[f64]| guard(&VarianceEqParams::symmetric(theta[0], theta[1], theta[2]));
    let mut sym_starts = vec![vec![
        spec.heuristic.intercept,
        0.5 * (spec.heuristic.arch_pos + spec.heuristic.arch_neg),
        spec.heuristic.persistence,
    ]];
    if let Some(w) = spec.warm {
        sym_starts.push(vec![
            w.intercept,
            0.5 * (w.arch_pos + w.arch_neg),
            w.persistence,
        ]);
    }
    for s in sym_starts.iter_mut() {
        clamp_into(s, &sym_bounds);
    }
    let sym_out = maximize(
        &sym_obj,
        &sym_bounds,
        &sym_starts,
        &OptimOptions {
            starts: opts.starts,
            seed,
            ..OptimOptions::default()
        },
        &spec.name,
    )?;
    let sym_eq = VarianceEqParams::symmetric(sym_out.theta[0], sym_out.theta[1], sym_out.theta[2]);

    if !opts.asymmetric {
        return Ok((
            sym_eq,
            StageReport {
                name: spec.name.clone(),
                llf: sym_out.value,
                evaluations: sym_out.evaluations,
                converged: sym_out.converged,
            },
        ));
    }

    let bounds = vec![
        Bounds::new(0.0, spec.intercept_hi),
        Bounds::new(0.0, spec.arch_hi),
        Bounds::new(0.0, spec.arch_hi),
        Bounds::new(0.0, spec.persistence_hi),
    ];
    let obj = |theta: &[f64]| {
        guard(&VarianceEqParams {
            intercept: theta[0],
            arch_pos: theta[1],
            arch_neg: theta[2],
            persistence: theta[3],
        })
    };
    let mut starts = vec![
        vec![
            spec.heuristic.intercept,
            spec.heuristic.arch_pos,
            spec.heuristic.arch_neg,
            spec.heuristic.persistence,
        ],
        // Symmetric optimum embedded: nesting anchor.
        vec![sym_eq.intercept, sym_eq.arch_pos, sym_eq.arch_neg, sym_eq.persistence],
    ];
    if let Some(w) = spec.warm {
        starts.push(vec![w.intercept, w.arch_pos, w.arch_neg, w.persistence]);
    }
    for s in starts.iter_mut() {
        clamp_into(s, &bounds);
    }
    let out = maximize(
        &obj,
        &bounds,
        &starts,
        &OptimOptions {
            starts: opts.starts,
            seed: stage_seed(seed, 7),
            ..OptimOptions::default()
        },
        &spec.name,
    )?;
    Ok((
        VarianceEqParams {
            intercept: out.theta[0],
            arch_pos: out.theta[1],
            arch_neg: out.theta[2],
            persistence: out.theta[3],
        },
        StageReport {
            name: spec.name.clone(),
            llf: out.value,
            evaluations: sym_out.evaluations + out.evaluations,
            converged: out.converged,
        },
    ))
}

/// Solves one correlation-type stage over (alpha, beta).
fn estimate_correlation_stage(
    objective: &dyn Fn(CorrParams) -> f64,
    name: &str,
    corr_hi: f64,
    cap: f64,
    warm: Option<CorrParams>,
    opts: &EstimateOptions,
    seed: u64,
) -> Result<(CorrParams, StageReport)> {
    let bounds = vec![Bounds::new(0.0, corr_hi), Bounds::new(0.0, corr_hi)];
    let obj = |theta: &[f64]| {
        if theta[0] + theta[1] >= cap {
            f64::NEG_INFINITY
        } else {
            objective(CorrParams {
                alpha: theta[0],
                beta: theta[1],
            })
        }
    };
    let mut starts = vec![vec![0.2, 0.7]];
    if let Some(w) = warm {
        starts.push(vec![w.alpha, w.beta]);
    }
    for s in starts.iter_mut() {
        clamp_into(s, &bounds);
    }
    let out = maximize(
        &obj,
        &bounds,
        &starts,
        &OptimOptions {
            starts: opts.starts,
            seed,
            ..OptimOptions::default()
        },
        name,
    )?;
    let mut fitted = CorrParams {
        alpha: out.theta[0],
        beta: out.theta[1],
    };
    let mut llf = out.value;
    // With alpha at zero the path is identically the target and beta is
    // unidentified; report the canonical (0, 0) pair.
    if fitted.alpha < 1e-7 {
        fitted = CorrParams { alpha: 0.0, beta: 0.0 };
        llf = objective(fitted);
    }
    Ok((
        fitted,
        StageReport {
            name: name.to_string(),
            llf,
            evaluations: out.evaluations,
            converged: out.converged,
        },
    ))
}

/// Step-by-step QML estimation of the core model. `warm` supplies extra
/// starting points for every stage (used for nesting guarantees and
/// rolling re-estimation).
pub fn estimate_core(
    returns: &DMatrix<f64>,
    measures: &RealizedMeasures,
    opts: &EstimateOptions,
    warm: Option<&CoreModelParams>,
) -> Result<CoreFit> {
    let t = measures.n_months();
    let k = measures.n_factors();
    if returns.nrows() != t || returns.ncols() != k {
        return Err(HeavyError::DimensionMismatch {
            context: "core estimation inputs".to_string(),
            expected: format!("{t} x {k} factor returns"),
            actual: format!("{} x {}", returns.nrows(), returns.ncols()),
        });
    }
    if t < opts.min_obs {
        return Err(HeavyError::EstimationFailed {
            stage: "core".to_string(),
            message: format!("{t} months available, need at least {}", opts.min_obs),
        });
    }
    if let Some(w) = warm {
        if w.n_factors() != k {
            return Err(HeavyError::DimensionMismatch {
                context: "core warm start".to_string(),
                expected: format!("{k} factors"),
                actual: format!("{}", w.n_factors()),
            });
        }
    }

    let boxes = CoreBoxes::from_measures(measures);
    let mut stages: Vec<StageReport> = Vec::new();

    // Stage 1: per-factor conditional variances.
    let mut var_eqs = Vec::with_capacity(k);
    for j in 0..k {
        let v: Vec<f64> = measures.factor_rv.column(j).iter().cloned().collect();
        let rets: Vec<f64> = returns.column(j).iter().cloned().collect();
        let mv = mean(&v);
        let spec = VarianceStageSpec {
            name: format!("variance[{}]", measures.factor_names[j]),
            intercept_hi: boxes.var_intercept_hi[j],
            persistence_hi: boxes.persistence_hi,
            arch_hi: boxes.arch_hi,
            joint_cap: f64::INFINITY,
            heuristic: VarianceEqParams {
                intercept: 0.05 * mv,
                arch_pos: 0.25,
                arch_neg: 0.45,
                persistence: 0.5,
            },
            warm: warm.map(|w| &w.var_eq[j]),
        };
        let obj = |eq: &VarianceEqParams| llf_variance_series(eq, &v, &rets);
        let (eq, report) =
            estimate_variance_stage(&obj, &spec, opts, stage_seed(opts.seed, 100 + j as u64))?;
        stages.push(report);
        var_eqs.push(eq);
    }

    // Degarched returns and targeting moments from the fitted variances.
    let mut u = DMatrix::zeros(t, k);
    for j in 0..k {
        let v: Vec<f64> = measures.factor_rv.column(j).iter().cloned().collect();
        let rets: Vec<f64> = returns.column(j).iter().cloned().collect();
        let positive = positive_signs(&rets);
        let h = filter_variance_path(&var_eqs[j], &v, &positive, None)?;
        for row in 0..t {
            u[(row, j)] = rets[row] / h[row].sqrt();
        }
    }
    let (r_bar, p_bar) = empirical_corr_targets(&u, &measures.factor_rcorr)?;

    // Stage 2: conditional correlations (free only for K >= 2).
    let corr = if k >= 2 {
        let obj = |c: CorrParams| {
            llf_correlations(c, &r_bar, &p_bar, &u, &measures.factor_rcorr, opts.pd_tol)
        };
        let (fitted, report) = estimate_correlation_stage(
            &obj,
            "correlation",
            boxes.corr_hi,
            opts.persistence_cap,
            warm.map(|w| w.corr),
            opts,
            stage_seed(opts.seed, 200),
        )?;
        stages.push(report);
        fitted
    } else {
        let fixed = CorrParams { alpha: 0.0, beta: 0.0 };
        stages.push(StageReport {
            name: "correlation".to_string(),
            llf: llf_correlations(fixed, &r_bar, &p_bar, &u, &measures.factor_rcorr, opts.pd_tol),
            evaluations: 0,
            converged: true,
        });
        fixed
    };

    // Stage 3: per-factor realized-variance means.
    let mut realized_var_eqs = Vec::with_capacity(k);
    for j in 0..k {
        let v: Vec<f64> = measures.factor_rv.column(j).iter().cloned().collect();
        let v_pos: Vec<f64> = measures.factor_rv_pos.column(j).iter().cloned().collect();
        let v_neg: Vec<f64> = measures.factor_rv_neg.column(j).iter().cloned().collect();
        let mv = mean(&v);
        let spec = VarianceStageSpec {
            name: format!("realized_variance[{}]", measures.factor_names[j]),
            intercept_hi: boxes.realized_var_intercept_hi[j],
            persistence_hi: boxes.persistence_hi,
            arch_hi: boxes.arch_hi,
            joint_cap: opts.persistence_cap,
            heuristic: VarianceEqParams {
                intercept: 0.05 * mv,
                arch_pos: 0.15,
                arch_neg: 0.25,
                persistence: 0.6,
            },
            warm: warm.map(|w| &w.realized_var_eq[j]),
        };
        let obj = |eq: &VarianceEqParams| llf_realized_variance_series(eq, &v_pos, &v_neg, &v);
        let (eq, report) =
            estimate_variance_stage(&obj, &spec, opts, stage_seed(opts.seed, 300 + j as u64))?;
        stages.push(report);
        realized_var_eqs.push(eq);
    }

    // Fitted realized-variance means, needed to scale RC in stage 4.
    let mut m_hat = DMatrix::zeros(t, k);
    for j in 0..k {
        let v_pos: Vec<f64> = measures.factor_rv_pos.column(j).iter().cloned().collect();
        let v_neg: Vec<f64> = measures.factor_rv_neg.column(j).iter().cloned().collect();
        let m = filter_realized_mean_path(&realized_var_eqs[j], &v_pos, &v_neg, None)?;
        for row in 0..t {
            m_hat[(row, j)] = m[row];
        }
    }

    // Stage 4: realized-correlation means (free only for K >= 2).
    let realized_corr = if k >= 2 {
        let scaled: Vec<DMatrix<f64>> = measures
            .factor_rcov
            .iter()
            .enumerate()
            .map(|(row, rc)| {
                let m_row: Vec<f64> = m_hat.row(row).iter().cloned().collect();
                scale_by_means(rc, &m_row)
            })
            .collect();
        let obj = |c: CorrParams| {
            llf_realized_correlations_scaled(c, &p_bar, &scaled, &measures.factor_rcorr, opts.pd_tol)
        };
        let (fitted, report) = estimate_correlation_stage(
            &obj,
            "realized_correlation",
            boxes.corr_hi,
            opts.persistence_cap,
            warm.map(|w| w.realized_corr),
            opts,
            stage_seed(opts.seed, 400),
        )?;
        stages.push(report);
        fitted
    } else {
        let fixed = CorrParams { alpha: 0.0, beta: 0.0 };
        stages.push(StageReport {
            name: "realized_correlation".to_string(),
            llf: llf_realized_correlations(
                fixed,
                &p_bar,
                &m_hat,
                &measures.factor_rcov,
                &measures.factor_rcorr,
                opts.pd_tol,
            ),
            evaluations: 0,
            converged: true,
        });
        fixed
    };

    let params = CoreModelParams {
        var_eq: var_eqs,
        corr,
        realized_var_eq: realized_var_eqs,
        realized_corr,
        corr_target: r_bar,
        realized_corr_target: p_bar,
    };
    let state = filter_core(&params, returns, measures, opts.pd_tol, None)?;

    let llf: f64 = stages.iter().map(|s| s.llf).sum();
    let n_params = params.n_free_params(opts.asymmetric);
    let converged = stages.iter().all(|s| s.converged);
    let report = FitReport {
        label: format!("core-{}", opts.label),
        llf,
        n_params,
        n_obs: t,
        aic: aic(llf, n_params, t),
        bic: bic(llf, n_params, t),
        converged,
        stages,
        params: params.param_records(&measures.factor_names, &boxes),
    };

    Ok(CoreFit {
        params,
        state,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn eq(i: f64, p: f64, n: f64, b: f64) -> VarianceEqParams {
        VarianceEqParams {
            intercept: i,
            arch_pos: p,
            arch_neg: n,
            persistence: b,
        }
    }

    #[test]
    fn variance_filter_matches_hand_rolled_loop() {
        let e = eq(0.1, 0.3, 0.5, 0.6);
        let v = [1.0, 2.0, 0.5, 1.5];
        let r = [0.2, -0.1, 0.0, 0.4];
        let positive = positive_signs(&r);
        let h = filter_variance_path(&e, &v, &positive, None).unwrap();
        // By hand: h1 = mean(v) = 1.25; zero return gates the negative leg.
        assert_relative_eq!(h[0], 1.25, epsilon = 1e-15);
        assert_relative_eq!(h[1], 0.1 + 0.3 * 1.0 + 0.6 * 1.25, epsilon = 1e-15);
        assert_relative_eq!(h[2], 0.1 + 0.5 * 2.0 + 0.6 * h[1], epsilon = 1e-15);
        assert_relative_eq!(h[3], 0.1 + 0.5 * 0.5 + 0.6 * h[2], epsilon = 1e-15);
    }

    #[test]
    fn tied_arch_coefficients_reproduce_unsplit_recursion() {
        let e = eq(0.05, 0.4, 0.4, 0.5);
        let v = [1.0, 0.8, 1.2, 0.9, 1.1];
        let r = [0.1, -0.2, 0.3, -0.1, 0.0];
        let positive = positive_signs(&r);
        let h = filter_variance_path(&e, &v, &positive, None).unwrap();
        // Unsplit reference: h_t = w + a v_{t-1} + b h_{t-1}.
        let mut expect = vec![mean(&v)];
        for t in 1..v.len() {
            expect.push(0.05 + 0.4 * v[t - 1] + 0.5 * expect[t - 1]);
        }
        for (a, b) in h.iter().zip(&expect) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_input_variance_path_converges_to_fixed_point() {
        let e = eq(0.2, 0.3, 0.3, 0.5);
        let v = vec![2.0; 400];
        let positive = vec![true; 400];
        let h = filter_variance_path(&e, &v, &positive, None).unwrap();
        let fixed_point = (0.2 + 0.3 * 2.0) / (1.0 - 0.5);
        assert_relative_eq!(h[399], fixed_point, epsilon = 1e-10);
    }

    #[test]
    fn targeting_keeps_correlation_path_at_target_when_alpha_beta_zero() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let rl: Vec<DMatrix<f64>> = (0..10)
            .map(|i| {
                let c = 0.3 + 0.02 * i as f64;
                DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0])
            })
            .collect();
        let path = filter_correlation_path(
            CorrParams { alpha: 0.0, beta: 0.0 },
            &r,
            &p,
            &rl,
            None,
            1e-10,
        )
        .unwrap();
        for m in &path {
            assert_eq!(m[(0, 1)], 0.4);
            assert_eq!(m[(0, 0)], 1.0);
        }
    }

    #[test]
    fn correlation_path_detects_pd_violation() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, -0.9, -0.9, 1.0]);
        let rl: Vec<DMatrix<f64>> =
            (0..5).map(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0])).collect();
        let err = filter_correlation_path(
            CorrParams { alpha: 0.9, beta: 0.05 },
            &r,
            &p,
            &rl,
            None,
            1e-10,
        )
        .unwrap_err();
        assert!(matches!(err, HeavyError::PdViolation { .. }));
    }

    #[test]
    fn infeasible_parameters_give_minus_infinity_not_panic() {
        let v = [1.0, 2.0, 1.5];
        let r = [0.1, -0.2, 0.3];
        // Strongly negative intercept drives h below zero.
        let bad = eq(-10.0, 0.1, 0.1, 0.1);
        assert_eq!(llf_variance_series(&bad, &v, &r), f64::NEG_INFINITY);
    }

    #[test]
    fn per_factor_separability_of_variance_llf() {
        let eqs = vec![eq(0.1, 0.2, 0.3, 0.5), eq(0.2, 0.4, 0.1, 0.4)];
        let rv = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.5, 1.0, 0.8, 1.2]);
        let rets = DMatrix::from_row_slice(3, 2, &[0.1, -0.3, 0.2, 0.1, -0.2, 0.05]);
        let total = llf_variances(&eqs, &rv, &rets);
        let mut sum = 0.0;
        for j in 0..2 {
            let v: Vec<f64> = rv.column(j).iter().cloned().collect();
            let r: Vec<f64> = rets.column(j).iter().cloned().collect();
            sum += llf_variance_series(&eqs[j], &v, &r);
        }
        assert_relative_eq!(total, sum, epsilon = 1e-14);
    }

    #[test]
    fn univariate_correlation_llf_reduces_to_squared_degarched() {
        let r = DMatrix::from_element(1, 1, 1.0);
        let p = DMatrix::from_element(1, 1, 1.0);
        let u = DMatrix::from_column_slice(4, 1, &[0.5, -1.0, 0.2, 1.5]);
        let rl: Vec<DMatrix<f64>> = (0..4).map(|_| DMatrix::from_element(1, 1, 1.0)).collect();
        let llf = llf_correlations(CorrParams { alpha: 0.0, beta: 0.0 }, &r, &p, &u, &rl, 1e-10);
        let expect = -0.5 * u.iter().map(|x| x * x).sum::<f64>();
        assert_relative_eq!(llf, expect, epsilon = 1e-14);
    }

    #[test]
    fn parameter_records_count_is_eight_k_plus_four() {
        for k in [1usize, 3, 4] {
            let params = CoreModelParams {
                var_eq: vec![eq(0.1, 0.2, 0.3, 0.5); k],
                corr: CorrParams { alpha: 0.0, beta: 0.0 },
                realized_var_eq: vec![eq(0.1, 0.2, 0.3, 0.5); k],
                realized_corr: CorrParams { alpha: 0.0, beta: 0.0 },
                corr_target: DMatrix::identity(k, k),
                realized_corr_target: DMatrix::identity(k, k),
            };
            let names: Vec<String> = (0..k).map(|j| format!("f{j}")).collect();
            let records = params.param_records(&names, &CoreBoxes::defaults(k));
            assert_eq!(records.len(), 8 * k + 4);
        }
    }

    #[test]
    fn information_criteria_follow_per_observation_convention() {
        // -2*(-17912.52)/732 + 2*36/732 = 49.0397...
        let a = aic(-17912.52, 36, 732);
        assert!((a - 49.040).abs() < 5e-4, "aic {a}");
        let b = bic(-17912.52, 36, 732);
        assert!((b - 49.266).abs() < 5e-4, "bic {b}");
    }

    /// Generates a small univariate HEAVY panel with known parameters.
    fn simulate_univariate(
        t: usize,
        var_eq: &VarianceEqParams,
        m_eq: &VarianceEqParams,
        seed: u64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let days = 21;
        let m_bar = m_eq.intercept
            / (1.0 - 0.5 * (m_eq.arch_pos + m_eq.arch_neg) - m_eq.persistence);
        let h_bar = (var_eq.intercept + 0.5 * (var_eq.arch_pos + var_eq.arch_neg) * m_bar)
            / (1.0 - var_eq.persistence);
        let mut h = h_bar;
        let mut m = m_bar;
        let (mut rets, mut v, mut v_pos, mut v_neg) = (vec![], vec![], vec![], vec![]);
        for _ in 0..t {
            let z: f64 = StandardNormal.sample(&mut rng);
            let r = z * h.sqrt();
            let daily_sd = (m / days as f64).sqrt();
            let (mut p, mut n) = (0.0, 0.0);
            for _ in 0..days {
                let x: f64 = StandardNormal.sample(&mut rng);
                let d = x * daily_sd;
                if d > 0.0 {
                    p += d * d;
                } else {
                    n += d * d;
                }
            }
            rets.push(r);
            v_pos.push(p);
            v_neg.push(n);
            v.push(p + n);
            let positive = r > 0.0;
            h = variance_step(var_eq, p + n, positive, h);
            m = realized_mean_step(m_eq, p, n, m);
        }
        (rets, v, v_pos, v_neg)
    }

    #[test]
    fn estimation_recovers_persistence_roughly_on_synthetic_series() {
        // A single Gaussian return per month carries little curvature, so the
        // sample must be long and the truth well inside the identified region
        // for parameter closeness to be a meaningful assertion.
        let true_var = eq(2e-4, 0.15, 0.40, 0.65);
        let true_m = eq(1e-4, 0.20, 0.30, 0.65);
        let (rets, v, _vp, _vn) = simulate_univariate(3000, &true_var, &true_m, 42);
        let spec = VarianceStageSpec {
            name: "test".to_string(),
            intercept_hi: 10.0 * mean(&v),
            persistence_hi: 0.9989,
            arch_hi: 3.0,
            joint_cap: f64::INFINITY,
            heuristic: eq(0.05 * mean(&v), 0.25, 0.45, 0.5),
            warm: None,
        };
        let opts = EstimateOptions {
            starts: 3,
            ..EstimateOptions::default()
        };
        let obj = |e: &VarianceEqParams| llf_variance_series(e, &v, &rets);
        let (fitted, report) = estimate_variance_stage(&obj, &spec, &opts, 5).unwrap();
        assert!(report.llf.is_finite());
        assert!(
            (fitted.persistence - 0.65).abs() < 0.3,
            "persistence {} too far from 0.65",
            fitted.persistence
        );
        // The fitted point can never be worse than the heuristic start, and a
        // maximizer worth its salt should also beat the generating truth.
        let start_llf = obj(&spec.heuristic);
        assert!(report.llf >= start_llf);
        assert!(report.llf >= obj(&true_var) - 1e-6);
    }

    #[test]
    fn estimate_core_runs_end_to_end_on_small_synthetic_panel() {
        // Two factors driven by independent univariate generators; the
        // correlation structure is noise around independence.
        let true_var = eq(2e-4, 0.3, 0.5, 0.5);
        let true_m = eq(1e-4, 0.25, 0.35, 0.55);
        let t = 240;
        let (r1, _v1, _p1, _n1) = simulate_univariate(t, &true_var, &true_m, 7);
        let (r2, _v2, _p2, _n2) = simulate_univariate(t, &true_var, &true_m, 8);

        // Build a two-factor panel from fresh daily draws so realized
        // correlations are well-defined.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut daily = Vec::new();
        let mut dates = Vec::new();
        let mut months = Vec::new();
        let mut ym = crate::panel::YearMonth::new(1990, 1).unwrap();
        for _ in 0..t {
            let mut block = DMatrix::zeros(21, 2);
            for i in 0..21 {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                block[(i, 0)] = 0.01 * a;
                block[(i, 1)] = 0.01 * (0.5 * a + 0.8 * b) + 0.001 * rng.random_range(-1.0..1.0);
            }
            daily.push(block);
            dates.push(
                (1..=21)
                    .map(|d| chrono::NaiveDate::from_ymd_opt(ym.year, ym.month, d).unwrap())
                    .collect(),
            );
            months.push(ym);
            ym = ym.next();
        }
        let mut monthly = DMatrix::zeros(t, 2);
        for row in 0..t {
            monthly[(row, 0)] = r1[row];
            monthly[(row, 1)] = r2[row];
        }
        let panel = crate::panel::ReturnPanel::from_parts(
            months,
            vec!["f1".to_string(), "f2".to_string()],
            vec![],
            monthly,
            daily,
            dates,
        )
        .unwrap();
        let measures = crate::measures::build_measures(&panel).unwrap();

        let opts = EstimateOptions {
            starts: 2,
            seed: 3,
            ..EstimateOptions::default()
        };
        let fit = estimate_core(&panel.factor_returns(), &measures, &opts, None).unwrap();
        assert!(fit.report.llf.is_finite());
        assert_eq!(fit.report.params.len(), 8 * 2 + 4);
        assert_eq!(fit.report.n_params, 8 * 2 + 4);
        assert_eq!(fit.state.n_months(), t);
        // Filtered state must satisfy the PD and positivity invariants.
        for row in 0..t {
            for j in 0..2 {
                assert!(fit.state.variances[(row, j)] > 0.0);
            }
        }
        for r in &fit.state.correlations {
            assert!(is_pd(r, 1e-10));
        }
    }

    #[test]
    fn symmetric_estimation_counts_six_k_plus_four() {
        let k = 2;
        let params = CoreModelParams {
            var_eq: vec![eq(0.1, 0.2, 0.2, 0.5); k],
            corr: CorrParams { alpha: 0.1, beta: 0.8 },
            realized_var_eq: vec![eq(0.1, 0.2, 0.2, 0.5); k],
            realized_corr: CorrParams { alpha: 0.1, beta: 0.8 },
            corr_target: DMatrix::identity(k, k),
            realized_corr_target: DMatrix::identity(k, k),
        };
        assert_eq!(params.n_free_params(false), 6 * k + 4);
        assert_eq!(params.n_free_params(true), 8 * k + 4);
    }
}
