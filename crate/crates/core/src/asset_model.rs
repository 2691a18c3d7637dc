//! Per-asset model conditional on the factors.
//!
//! Each asset i carries scalar variance recursions of the same form as the
//! factor equations plus two vector recursions for its correlations with the
//! K factors, run in the Fisher (atanh) domain so the paths stay inside
//! (-1, 1):
//!
//!   F(rho_{i,t}) = phi_R + alpha_R F(rl_{i,t-1}) + beta_R F(rho_{i,t-1})
//!   F(p_{i,t})   = phi_P + alpha_P F(rl_{i,t-1}) + beta_P F(p_{i,t-1})
//!
//! with scalar coefficients applied elementwise. The asset QMLs condition on
//! the fitted core model:
//!
//!   conditional: -1/2 sum [ log(h_i (1-q)) + (u_i - rho' R^{-1} u^c)^2 / (1-q) ],
//!                q = rho' R^{-1} rho
//!   realized:    -1/2 sum [ log(m_i (1-p|c)) + (v_i - rc' RC^{-1} rc) / (m_i (1-p|c)) ],
//!                p|c = p' P^{-1} p
//!
//! Estimation runs the two stages independently given the core fit: the
//! conditional stage solves (c_h, a_h+, a_h-, b_h, phi_R, alpha_R, beta_R),
//! the realized stage (c_m, a_m+, a_m-, b_m, phi_P, alpha_P, beta_P).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::core_model::{
    aic, bic, filter_realized_mean_path, filter_variance_path, positive_signs, stage_seed,
    EstimateOptions, FitReport, ParamRecord, StageReport, VarianceEqParams,
};
use crate::error::{HeavyError, Result};
use crate::linalg::mean;
use crate::measures::RealizedMeasures;
use crate::optim::{maximize, Bounds, OptimOptions};

/// Realized correlation inputs are pulled inside this bound before the
/// Fisher transform.
pub const FISHER_INPUT_CLAMP: f64 = 1.0 - 1e-8;
/// Filtered correlations are kept strictly inside (-1, 1) at this margin.
pub const CORR_OUTPUT_CLAMP: f64 = 1.0 - 1e-12;
/// Assets whose realized correlations hit the input clamp more often than
/// this fraction of entries are rejected as degenerate data.
pub const MAX_CLAMP_RATE: f64 = 0.01;

/// Fisher transform F(x) = atanh(x).
pub fn fisher(x: f64) -> f64 {
    x.atanh()
}

/// Inverse Fisher transform tanh(x).
pub fn fisher_inv(x: f64) -> f64 {
    x.tanh()
}

/// Clamps a correlation into the Fisher-safe range; the flag reports
/// whether clamping happened.
pub fn clamp_correlation(x: f64) -> (f64, bool) {
    if x > FISHER_INPUT_CLAMP {
        (FISHER_INPUT_CLAMP, true)
    } else if x < -FISHER_INPUT_CLAMP {
        (-FISHER_INPUT_CLAMP, true)
    } else {
        (x, false)
    }
}

/// Scalar coefficients of one Fisher-domain correlation-vector recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrVecEqParams {
    pub intercept: f64,
    pub arch: f64,
    pub persistence: f64,
}

/// Full parameter set for one asset: 14 values, 12 free under the
/// symmetric (tied arch) restriction.
#[derive(Debug, Clone)]
pub struct AssetModelParams {
    pub var_eq: VarianceEqParams,
    pub corr_eq: CorrVecEqParams,
    pub realized_var_eq: VarianceEqParams,
    pub realized_corr_eq: CorrVecEqParams,
}

impl AssetModelParams {
    pub fn validate(&self, name: &str) -> Result<()> {
        self.var_eq.validate(&format!("{name}.var_eq"))?;
        self.realized_var_eq.validate(&format!("{name}.realized_var_eq"))?;
        for (field, eq) in [("corr_eq", self.corr_eq), ("realized_corr_eq", self.realized_corr_eq)] {
            if !(eq.intercept.is_finite()
                && eq.arch >= 0.0
                && eq.persistence >= 0.0
                && eq.arch + eq.persistence < 1.0)
            {
                return Err(HeavyError::InvalidParameter {
                    name: format!("{name}.{field}"),
                    message: "requires finite intercept, non-negative arch/persistence with sum < 1"
                        .to_string(),
                });
            }
        }
        Ok(())
    }

    /// Flat records, always 14 entries per asset.
    pub fn param_records(&self, asset_name: &str, boxes: &AssetBoxes) -> Vec<ParamRecord> {
        let mut out = Vec::with_capacity(14);
        let var = [
            ("var_intercept", self.var_eq.intercept, 0.0, boxes.var_intercept_hi),
            ("var_arch_pos", self.var_eq.arch_pos, 0.0, boxes.arch_hi),
            ("var_arch_neg", self.var_eq.arch_neg, 0.0, boxes.arch_hi),
            ("var_persistence", self.var_eq.persistence, 0.0, boxes.persistence_hi),
            ("corr_intercept", self.corr_eq.intercept, -boxes.corr_intercept_abs, boxes.corr_intercept_abs),
            ("corr_arch", self.corr_eq.arch, 0.0, boxes.corr_hi),
            ("corr_persistence", self.corr_eq.persistence, 0.0, boxes.corr_hi),
            ("realized_var_intercept", self.realized_var_eq.intercept, 0.0, boxes.realized_var_intercept_hi),
            ("realized_var_arch_pos", self.realized_var_eq.arch_pos, 0.0, boxes.arch_hi),
            ("realized_var_arch_neg", self.realized_var_eq.arch_neg, 0.0, boxes.arch_hi),
            ("realized_var_persistence", self.realized_var_eq.persistence, 0.0, boxes.persistence_hi),
            ("realized_corr_intercept", self.realized_corr_eq.intercept, -boxes.corr_intercept_abs, boxes.corr_intercept_abs),
            ("realized_corr_arch", self.realized_corr_eq.arch, 0.0, boxes.corr_hi),
            ("realized_corr_persistence", self.realized_corr_eq.persistence, 0.0, boxes.corr_hi),
        ];
        for (n, v, lo, hi) in var {
            out.push(ParamRecord::new(n, asset_name, v, lo, hi));
        }
        out
    }

    pub fn n_free_params(asymmetric: bool) -> usize {
        if asymmetric {
            14
        } else {
            12
        }
    }
}

/// Box bounds for the asset stages.
#[derive(Debug, Clone)]
pub struct AssetBoxes {
    pub var_intercept_hi: f64,
    pub realized_var_intercept_hi: f64,
    pub arch_hi: f64,
    pub persistence_hi: f64,
    pub corr_intercept_abs: f64,
    pub corr_hi: f64,
}

impl AssetBoxes {
    pub fn defaults() -> Self {
        AssetBoxes {
            var_intercept_hi: 10.0,
            realized_var_intercept_hi: 10.0,
            arch_hi: 3.0,
            persistence_hi: 0.9989,
            corr_intercept_abs: 3.0,
            corr_hi: 0.999,
        }
    }

    pub fn from_measures(measures: &RealizedMeasures, asset_index: usize) -> Self {
        let t = measures.n_months() as f64;
        let cap = 10.0 * measures.asset_rv.column(asset_index).sum() / t;
        AssetBoxes {
            var_intercept_hi: cap,
            realized_var_intercept_hi: cap,
            ..AssetBoxes::defaults()
        }
    }
}

/// Filtered per-asset paths.
#[derive(Debug, Clone)]
pub struct AssetFilteredState {
    /// Conditional variances h_{i,t}.
    pub variances: Vec<f64>,
    /// Degarched returns u_{i,t}.
    pub degarched: Vec<f64>,
    /// Conditional asset-factor correlations rho_{i,t}, T x K.
    pub correlations: DMatrix<f64>,
    /// Realized-variance means m_{i,t}.
    pub realized_var_means: Vec<f64>,
    /// Realized-correlation means p_{i,t}, T x K.
    pub realized_corr_means: DMatrix<f64>,
    /// Number of realized-correlation entries clamped before the Fisher
    /// transform.
    pub clamped_inputs: usize,
}

/// One step of the Fisher-domain recursion, elementwise over K entries.
pub fn fisher_step(eq: &CorrVecEqParams, f_rl_prev: &[f64], f_prev: &[f64], out: &mut [f64]) {
    for j in 0..f_prev.len() {
        out[j] = eq.intercept + eq.arch * f_rl_prev[j] + eq.persistence * f_prev[j];
    }
}

/// Fisher transform of a correlation matrix row-set with clamp counting.
fn fisher_of(rl: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let mut f = DMatrix::zeros(rl.nrows(), rl.ncols());
    let mut clamped = 0usize;
    for i in 0..rl.nrows() {
        for j in 0..rl.ncols() {
            let (x, hit) = clamp_correlation(rl[(i, j)]);
            if hit {
                clamped += 1;
            }
            f[(i, j)] = fisher(x);
        }
    }
    (f, clamped)
}

/// Internal fast path over pre-transformed inputs; `f_init` is the first
/// row in the Fisher domain. Returns the correlation-domain path.
fn filter_fisher_path_pre(
    eq: &CorrVecEqParams,
    f_rl: &DMatrix<f64>,
    f_init: &[f64],
) -> Result<DMatrix<f64>> {
    let t = f_rl.nrows();
    let k = f_rl.ncols();
    let mut f_prev = f_init.to_vec();
    let mut rho = DMatrix::zeros(t, k);
    let mut f_next = vec![0.0; k];
    for j in 0..k {
        rho[(0, j)] = fisher_inv(f_prev[j]).clamp(-CORR_OUTPUT_CLAMP, CORR_OUTPUT_CLAMP);
    }
    for row in 1..t {
        fisher_step(eq, &f_rl.row(row - 1).iter().cloned().collect::<Vec<_>>(), &f_prev, &mut f_next);
        for j in 0..k {
            if !f_next[j].is_finite() {
                return Err(HeavyError::NonFinite {
                    time: row,
                    context: "fisher correlation path".to_string(),
                });
            }
            rho[(row, j)] = fisher_inv(f_next[j]).clamp(-CORR_OUTPUT_CLAMP, CORR_OUTPUT_CLAMP);
        }
        std::mem::swap(&mut f_prev, &mut f_next);
    }
    Ok(rho)
}

/// Filters one asset's correlation vector path. `init` overrides the
/// default first row (elementwise mean of the realized correlations).
/// Returns the path and the clamp count on the inputs.
pub fn filter_asset_correlations(
    eq: &CorrVecEqParams,
    rl: &DMatrix<f64>,
    init: Option<&[f64]>,
) -> Result<(DMatrix<f64>, usize)> {
    if rl.nrows() == 0 {
        return Err(HeavyError::DataQuality(
            "empty correlation input sequence".to_string(),
        ));
    }
    let (f_rl, clamped) = fisher_of(rl);
    let f_init = fisher_domain_init(rl, init);
    let rho = filter_fisher_path_pre(eq, &f_rl, &f_init)?;
    Ok((rho, clamped))
}

fn fisher_domain_init(rl: &DMatrix<f64>, init: Option<&[f64]>) -> Vec<f64> {
    let k = rl.ncols();
    match init {
        Some(row) => row.iter().map(|x| fisher(clamp_correlation(*x).0)).collect(),
        None => (0..k)
            .map(|j| {
                let m = rl.column(j).sum() / rl.nrows() as f64;
                fisher(clamp_correlation(m).0)
            })
            .collect(),
    }
}

/// Conditional QML of one asset given the core fit.
pub fn llf_asset_conditional(
    returns: &[f64],
    h: &[f64],
    rho: &DMatrix<f64>,
    core_correlations: &[DMatrix<f64>],
    core_degarched: &DMatrix<f64>,
    pd_tol: f64,
) -> f64 {
    let chols: Option<Vec<_>> = core_correlations
        .iter()
        .map(|r| Cholesky::new(r.clone()))
        .collect();
    match chols {
        Some(c) => llf_asset_conditional_pre(returns, h, rho, &c, core_degarched, pd_tol),
        None => f64::NEG_INFINITY,
    }
}

fn llf_asset_conditional_pre(
    returns: &[f64],
    h: &[f64],
    rho: &DMatrix<f64>,
    core_chols: &[Cholesky<f64, Dyn>],
    core_degarched: &DMatrix<f64>,
    pd_tol: f64,
) -> f64 {
    let t = returns.len();
    if h.len() != t || rho.nrows() != t || core_chols.len() != t || core_degarched.nrows() != t {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for row in 0..t {
        let rho_t = rho.row(row).transpose();
        let x = core_chols[row].solve(&rho_t);
        let q = rho_t.dot(&x);
        if !(q < 1.0 - pd_tol) {
            return f64::NEG_INFINITY;
        }
        let u = returns[row] / h[row].sqrt();
        let cond_mean = core_degarched.row(row).transpose().dot(&x);
        let resid = u - cond_mean;
        acc += (h[row] * (1.0 - q)).ln() + resid * resid / (1.0 - q);
    }
    if acc.is_finite() {
        -0.5 * acc
    } else {
        f64::NEG_INFINITY
    }
}

/// Realized residual variances v_{i,t} - rc' RC^{-1} rc, clamped at zero.
/// Fails if a realized factor covariance is numerically singular even
/// after a small ridge.
pub fn realized_residual_variances(
    asset_rv: &[f64],
    asset_factor_rcov: &DMatrix<f64>,
    factor_rcov: &[DMatrix<f64>],
) -> Result<Vec<f64>> {
    let t = asset_rv.len();
    if asset_factor_rcov.nrows() != t || factor_rcov.len() != t {
        return Err(HeavyError::DimensionMismatch {
            context: "realized residual variances".to_string(),
            expected: format!("{t} months"),
            actual: format!("{} rows, {} matrices", asset_factor_rcov.nrows(), factor_rcov.len()),
        });
    }
    let mut out = Vec::with_capacity(t);
    for row in 0..t {
        let rc = asset_factor_rcov.row(row).transpose();
        let chol = cholesky_with_ridge(&factor_rcov[row]).ok_or_else(|| {
            HeavyError::DataQuality(format!(
                "realized factor covariance at month index {row} is numerically singular"
            ))
        })?;
        let solved = chol.solve(&rc);
        out.push((asset_rv[row] - rc.dot(&solved)).max(0.0));
    }
    Ok(out)
}

fn cholesky_with_ridge(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Some(c);
    }
    let k = a.nrows();
    let scale = a.trace().abs().max(1e-300) / k as f64;
    let mut ridge = 1e-10 * scale;
    for _ in 0..3 {
        let mut b = a.clone();
        for i in 0..k {
            b[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(b) {
            return Some(c);
        }
        ridge *= 100.0;
    }
    None
}

/// Realized-measure QML of one asset given the core fit.
pub fn llf_asset_realized(
    asset_rv: &[f64],
    m: &[f64],
    p: &DMatrix<f64>,
    core_realized_corr: &[DMatrix<f64>],
    asset_factor_rcov: &DMatrix<f64>,
    factor_rcov: &[DMatrix<f64>],
    pd_tol: f64,
) -> f64 {
    let resid = match realized_residual_variances(asset_rv, asset_factor_rcov, factor_rcov) {
        Ok(r) => r,
        Err(_) => return f64::NEG_INFINITY,
    };
    let chols: Option<Vec<_>> = core_realized_corr
        .iter()
        .map(|x| Cholesky::new(x.clone()))
        .collect();
    match chols {
        Some(c) => llf_asset_realized_pre(&resid, m, p, &c, pd_tol),
        None => f64::NEG_INFINITY,
    }
}

fn llf_asset_realized_pre(
    realized_resid: &[f64],
    m: &[f64],
    p: &DMatrix<f64>,
    core_chols: &[Cholesky<f64, Dyn>],
    pd_tol: f64,
) -> f64 {
    let t = realized_resid.len();
    if m.len() != t || p.nrows() != t || core_chols.len() != t {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for row in 0..t {
        let p_t = p.row(row).transpose();
        let x = core_chols[row].solve(&p_t);
        let pic = p_t.dot(&x);
        if !(pic < 1.0 - pd_tol) {
            return f64::NEG_INFINITY;
        }
        let scale = m[row] * (1.0 - pic);
        acc += scale.ln() + realized_resid[row] / scale;
    }
    if acc.is_finite() {
        -0.5 * acc
    } else {
        f64::NEG_INFINITY
    }
}

/// A fitted asset model.
#[derive(Debug, Clone)]
pub struct AssetFit {
    pub params: AssetModelParams,
    pub state: AssetFilteredState,
    pub report: FitReport,
}

struct StageSpec<'a> {
    name: String,
    bounds: Vec<Bounds>,
    heuristic: Vec<f64>,
    warm: Option<Vec<f64>>,
    opts: &'a EstimateOptions,
    seed: u64,
}

/// Solves one seven-parameter asset stage
/// (intercept, arch_pos, arch_neg, persistence, phi, alpha, beta).
/// Under the asymmetric flag a tied prefit supplies a nesting start.
fn solve_asset_stage(
    objective: &dyn Fn(&[f64]) -> f64,
    spec: &StageSpec,
) -> Result<(Vec<f64>, StageReport)> {
    let expand = |theta6: &[f64]| -> Vec<f64> {
        vec![theta6[0], theta6[1], theta6[1], theta6[2], theta6[3], theta6[4], theta6[5]]
    };
    let reduce = |theta7: &[f64]| -> Vec<f64> {
        vec![
            theta7[0],
            0.5 * (theta7[1] + theta7[2]),
            theta7[3],
            theta7[4],
            theta7[5],
            theta7[6],
        ]
    };

    let sym_bounds = vec![
        spec.bounds[0],
        spec.bounds[1],
        spec.bounds[3],
        spec.bounds[4],
        spec.bounds[5],
        spec.bounds[6],
    ];
    let sym_obj = |theta: &[f64]| objective(&expand(theta));
    let mut sym_starts = vec![reduce(&spec.heuristic)];
    if let Some(w) = &spec.warm {
        sym_starts.push(reduce(w));
    }
    for s in sym_starts.iter_mut() {
        clamp_start(s, &sym_bounds);
    }
    let sym_out = maximize(
        &sym_obj,
        &sym_bounds,
        &sym_starts,
        &OptimOptions {
            starts: spec.opts.starts,
            seed: spec.seed,
            ..OptimOptions::default()
        },
        &spec.name,
    )?;

    if !spec.opts.asymmetric {
        return Ok((
            expand(&sym_out.theta),
            StageReport {
                name: spec.name.clone(),
                llf: sym_out.value,
                evaluations: sym_out.evaluations,
                converged: sym_out.converged,
            },
        ));
    }

    let mut starts = vec![spec.heuristic.clone(), expand(&sym_out.theta)];
    if let Some(w) = &spec.warm {
        starts.push(w.clone());
    }
    for s in starts.iter_mut() {
        clamp_start(s, &spec.bounds);
    }
    let out = maximize(
        objective,
        &spec.bounds,
        &starts,
        &OptimOptions {
            starts: spec.opts.starts,
            seed: stage_seed(spec.seed, 7),
            ..OptimOptions::default()
        },
        &spec.name,
    )?;
    Ok((
        out.theta.clone(),
        StageReport {
            name: spec.name.clone(),
            llf: out.value,
            evaluations: sym_out.evaluations + out.evaluations,
            converged: out.converged,
        },
    ))
}

fn clamp_start(theta: &mut [f64], bounds: &[Bounds]) {
    for (x, b) in theta.iter_mut().zip(bounds) {
        let w = b.hi - b.lo;
        *x = x.clamp(b.lo + 1e-9 * w, b.hi - 1e-9 * w);
    }
}

fn var_eq_from(theta: &[f64]) -> VarianceEqParams {
    VarianceEqParams {
        intercept: theta[0],
        arch_pos: theta[1],
        arch_neg: theta[2],
        persistence: theta[3],
    }
}

fn corr_eq_from(theta: &[f64]) -> CorrVecEqParams {
    CorrVecEqParams {
        intercept: theta[4],
        arch: theta[5],
        persistence: theta[6],
    }
}

/// Two-stage QML estimation of one asset given the fitted core state.
pub fn estimate_asset(
    asset_index: usize,
    returns: &[f64],
    measures: &RealizedMeasures,
    core: &crate::core_model::CoreFilteredState,
    opts: &EstimateOptions,
    warm: Option<&AssetModelParams>,
) -> Result<AssetFit> {
    let t = measures.n_months();
    let name = measures.asset_names[asset_index].clone();
    if returns.len() != t || core.n_months() != t {
        return Err(HeavyError::DimensionMismatch {
            context: format!("asset estimation inputs for {name}"),
            expected: format!("{t} months"),
            actual: format!("{} returns, {} core months", returns.len(), core.n_months()),
        });
    }

    let v: Vec<f64> = measures.asset_rv.column(asset_index).iter().cloned().collect();
    let v_pos: Vec<f64> = measures.asset_rv_pos.column(asset_index).iter().cloned().collect();
    let v_neg: Vec<f64> = measures.asset_rv_neg.column(asset_index).iter().cloned().collect();
    let positive = positive_signs(returns);
    let rl = measures.asset_corr_path(asset_index);
    let rc = measures.asset_cov_path(asset_index);

    let (f_rl, clamped) = fisher_of(&rl);
    let k = rl.ncols();
    let clamp_rate = clamped as f64 / (t * k) as f64;
    if clamp_rate > MAX_CLAMP_RATE {
        return Err(HeavyError::DataQuality(format!(
            "asset {name}: {:.2}% of realized correlations at the clamp bound; data too degenerate",
            100.0 * clamp_rate
        )));
    }
    let f_init = fisher_domain_init(&rl, None);
    let f_mean = f_rl.iter().sum::<f64>() / (t * k) as f64;

    let corr_chols: Vec<Cholesky<f64, Dyn>> = core
        .correlations
        .iter()
        .enumerate()
        .map(|(row, r)| {
            Cholesky::new(r.clone()).ok_or_else(|| HeavyError::PdViolation {
                time: row,
                context: "core correlation path during asset estimation".to_string(),
                min_eigenvalue: crate::linalg::min_eigenvalue(r),
            })
        })
        .collect::<Result<_>>()?;
    let realized_chols: Vec<Cholesky<f64, Dyn>> = core
        .realized_corr_means
        .iter()
        .enumerate()
        .map(|(row, p)| {
            Cholesky::new(p.clone()).ok_or_else(|| HeavyError::PdViolation {
                time: row,
                context: "core realized correlation path during asset estimation".to_string(),
                min_eigenvalue: crate::linalg::min_eigenvalue(p),
            })
        })
        .collect::<Result<_>>()?;
    let resid = realized_residual_variances(&v, &rc, &measures.factor_rcov)?;

    let boxes = AssetBoxes::from_measures(measures, asset_index);
    let mv = mean(&v);
    let cap = opts.persistence_cap;

    let bounds7 = |intercept_hi: f64| {
        vec![
            Bounds::new(0.0, intercept_hi),
            Bounds::new(0.0, boxes.arch_hi),
            Bounds::new(0.0, boxes.arch_hi),
            Bounds::new(0.0, boxes.persistence_hi),
            Bounds::new(-boxes.corr_intercept_abs, boxes.corr_intercept_abs),
            Bounds::new(0.0, boxes.corr_hi),
            Bounds::new(0.0, boxes.corr_hi),
        ]
    };

    // Stage 1: conditional variance and correlation parameters.
    let cond_obj = |theta: &[f64]| -> f64 {
        if theta[5] + theta[6] >= cap {
            return f64::NEG_INFINITY;
        }
        let var_eq = var_eq_from(theta);
        let corr_eq = corr_eq_from(theta);
        let h = match filter_variance_path(&var_eq, &v, &positive, None) {
            Ok(h) => h,
            Err(_) => return f64::NEG_INFINITY,
        };
        let rho = match filter_fisher_path_pre(&corr_eq, &f_rl, &f_init) {
            Ok(r) => r,
            Err(_) => return f64::NEG_INFINITY,
        };
        llf_asset_conditional_pre(returns, &h, &rho, &corr_chols, &core.degarched, opts.pd_tol)
    };
    let cond_spec = StageSpec {
        name: format!("conditional[{name}]"),
        bounds: bounds7(boxes.var_intercept_hi),
        heuristic: vec![0.05 * mv, 0.25, 0.45, 0.5, 0.1 * f_mean, 0.05, 0.85],
        warm: warm.map(|w| {
            vec![
                w.var_eq.intercept,
                w.var_eq.arch_pos,
                w.var_eq.arch_neg,
                w.var_eq.persistence,
                w.corr_eq.intercept,
                w.corr_eq.arch,
                w.corr_eq.persistence,
            ]
        }),
        opts,
        seed: stage_seed(opts.seed, 500 + asset_index as u64),
    };
    let (cond_theta, cond_report) = solve_asset_stage(&cond_obj, &cond_spec)?;

    // Stage 2: realized-measure parameters, independent of stage 1.
    let real_obj = |theta: &[f64]| -> f64 {
        if theta[1].max(theta[2]) + theta[3] >= cap || theta[5] + theta[6] >= cap {
            return f64::NEG_INFINITY;
        }
        let var_eq = var_eq_from(theta);
        let corr_eq = corr_eq_from(theta);
        let m = match filter_realized_mean_path(&var_eq, &v_pos, &v_neg, None) {
            Ok(m) => m,
            Err(_) => return f64::NEG_INFINITY,
        };
        let p = match filter_fisher_path_pre(&corr_eq, &f_rl, &f_init) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        llf_asset_realized_pre(&resid, &m, &p, &realized_chols, opts.pd_tol)
    };
    let real_spec = StageSpec {
        name: format!("realized[{name}]"),
        bounds: bounds7(boxes.realized_var_intercept_hi),
        heuristic: vec![0.05 * mv, 0.15, 0.25, 0.6, 0.1 * f_mean, 0.05, 0.85],
        warm: warm.map(|w| {
            vec![
                w.realized_var_eq.intercept,
                w.realized_var_eq.arch_pos,
                w.realized_var_eq.arch_neg,
                w.realized_var_eq.persistence,
                w.realized_corr_eq.intercept,
                w.realized_corr_eq.arch,
                w.realized_corr_eq.persistence,
            ]
        }),
        opts,
        seed: stage_seed(opts.seed, 800 + asset_index as u64),
    };
    let (real_theta, real_report) = solve_asset_stage(&real_obj, &real_spec)?;

    let params = AssetModelParams {
        var_eq: var_eq_from(&cond_theta),
        corr_eq: corr_eq_from(&cond_theta),
        realized_var_eq: var_eq_from(&real_theta),
        realized_corr_eq: corr_eq_from(&real_theta),
    };

    let state = filter_asset(
        &params,
        returns,
        &v,
        &v_pos,
        &v_neg,
        &rl,
        None,
        opts.pd_tol,
        &corr_chols,
        &realized_chols,
    )?;

    let llf = cond_report.llf + real_report.llf;
    let n_params = AssetModelParams::n_free_params(opts.asymmetric);
    let converged = cond_report.converged && real_report.converged;
    let report = FitReport {
        label: format!("asset-{name}"),
        llf,
        n_params,
        n_obs: t,
        aic: aic(llf, n_params, t),
        bic: bic(llf, n_params, t),
        converged,
        stages: vec![cond_report, real_report],
        params: params.param_records(&name, &boxes),
    };

    Ok(AssetFit {
        params,
        state,
        report,
    })
}

/// Explicit initial state for the asset filters, in natural units.
#[derive(Debug, Clone)]
pub struct AssetInit {
    pub variance: f64,
    pub corr: Vec<f64>,
    pub realized_var: f64,
    pub realized_corr: Vec<f64>,
}

/// Runs all four per-asset filters and validates that the implied joint
/// correlation structure stays positive definite (q and p|c below one).
pub fn filter_asset(
    params: &AssetModelParams,
    returns: &[f64],
    v: &[f64],
    v_pos: &[f64],
    v_neg: &[f64],
    rl: &DMatrix<f64>,
    init: Option<&AssetInit>,
    pd_tol: f64,
    corr_chols: &[Cholesky<f64, Dyn>],
    realized_chols: &[Cholesky<f64, Dyn>],
) -> Result<AssetFilteredState> {
    let positive = positive_signs(returns);
    let variances = filter_variance_path(&params.var_eq, v, &positive, init.map(|i| i.variance))?;
    let realized_var_means = filter_realized_mean_path(
        &params.realized_var_eq,
        v_pos,
        v_neg,
        init.map(|i| i.realized_var),
    )?;
    let (correlations, clamped_a) = filter_asset_correlations(
        &params.corr_eq,
        rl,
        init.map(|i| i.corr.as_slice()),
    )?;
    let (realized_corr_means, clamped_b) = filter_asset_correlations(
        &params.realized_corr_eq,
        rl,
        init.map(|i| i.realized_corr.as_slice()),
    )?;

    let t = returns.len();
    for row in 0..t {
        let rho_t = correlations.row(row).transpose();
        let q = rho_t.dot(&corr_chols[row].solve(&rho_t));
        if !(q < 1.0 - pd_tol) {
            return Err(HeavyError::PdViolation {
                time: row,
                context: "asset joint conditional correlation".to_string(),
                min_eigenvalue: 1.0 - q,
            });
        }
        let p_t = realized_corr_means.row(row).transpose();
        let pic = p_t.dot(&realized_chols[row].solve(&p_t));
        if !(pic < 1.0 - pd_tol) {
            return Err(HeavyError::PdViolation {
                time: row,
                context: "asset joint realized correlation".to_string(),
                min_eigenvalue: 1.0 - pic,
            });
        }
    }

    let degarched: Vec<f64> = returns
        .iter()
        .zip(&variances)
        .map(|(r, h)| r / h.sqrt())
        .collect();

    Ok(AssetFilteredState {
        variances,
        degarched,
        correlations,
        realized_var_means,
        realized_corr_means,
        clamped_inputs: clamped_a + clamped_b,
    })
}

/// Joint correlation feasibility: the (K+1) joint matrix [R rho; rho' 1]
/// is positive definite iff R is positive definite and q = rho' R^{-1} rho < 1.
pub fn joint_correlation_q(rho: &DVector<f64>, corr: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(corr.clone())?;
    Some(rho.dot(&chol.solve(rho)))
}
