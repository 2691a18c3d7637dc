//! Synthetic data generation from the hierarchical model.
//!
//! Each month the joint (K + N) correlation matrix is assembled from the
//! factor block and the asset-factor vectors with a Schur-complement
//! construction: for assets i, j
//!
//!   Gamma_ij = rho_i' R^{-1} rho_j + C_ij sqrt((1 - q_i)(1 - q_j)),
//!   q_i = rho_i' R^{-1} rho_i,
//!
//! where C is the idiosyncratic correlation (identity by default). The
//! joint matrix is positive definite exactly when R is and every q_i < 1.
//! Daily returns are drawn i.i.d. within the month from the realized-mean
//! covariance divided by the day count, so the realized measures computed
//! by the ingestion path have the model-implied conditional means; monthly
//! returns are drawn from the conditional covariance. States then advance
//! through the same recursion code the filters use, so filtered paths
//! started from the recorded initial states reproduce the true paths.
//! Months whose updated states would leave the feasible region (a rare
//! event under sensible parameters) are redrawn a bounded number of times.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::asset_model::{clamp_correlation, fisher, fisher_inv, fisher_step, AssetInit, AssetModelParams, CORR_OUTPUT_CLAMP};
use crate::core_model::{
    correlation_intercept, correlation_step, realized_corr_step, realized_mean_step,
    variance_step, CoreInit, CoreModelParams,
};
use crate::error::{HeavyError, Result};
use crate::linalg::{is_pd, min_eigenvalue};
use crate::measures::{realized_correlation_matrix, realized_covariance, signed_semivariances};
use crate::panel::{ReturnPanel, YearMonth};

const MAX_REDRAWS: usize = 50;

/// Specification of the data generating process.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub core: CoreModelParams,
    pub assets: Vec<AssetModelParams>,
    pub factor_names: Vec<String>,
    pub asset_names: Vec<String>,
    /// Idiosyncratic correlation among assets (unit diagonal); identity
    /// when omitted.
    pub idio_correlation: Option<DMatrix<f64>>,
    /// Trading days per month for the synthetic calendar (at most 28).
    pub days_per_month: usize,
    pub n_months: usize,
    /// Months simulated and discarded before recording starts.
    pub burn_in: usize,
    pub seed: u64,
    pub start: YearMonth,
}

impl DgpSpec {
    pub fn n_factors(&self) -> usize {
        self.core.n_factors()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    fn validate(&self) -> Result<()> {
        self.core.validate()?;
        let k = self.n_factors();
        let n = self.n_assets();
        if self.factor_names.len() != k || self.asset_names.len() != n {
            return Err(HeavyError::DimensionMismatch {
                context: "simulation names".to_string(),
                expected: format!("{k} factor names, {n} asset names"),
                actual: format!("{}, {}", self.factor_names.len(), self.asset_names.len()),
            });
        }
        for (i, a) in self.assets.iter().enumerate() {
            a.validate(&format!("assets[{i}]"))?;
        }
        if self.days_per_month == 0 || self.days_per_month > 28 {
            return Err(HeavyError::Config(format!(
                "days_per_month must be in 1..=28, got {}",
                self.days_per_month
            )));
        }
        if self.n_months == 0 {
            return Err(HeavyError::Config("n_months must be positive".to_string()));
        }
        if let Some(c) = &self.idio_correlation {
            if c.nrows() != n || c.ncols() != n {
                return Err(HeavyError::DimensionMismatch {
                    context: "idiosyncratic correlation".to_string(),
                    expected: format!("{n} x {n}"),
                    actual: format!("{} x {}", c.nrows(), c.ncols()),
                });
            }
            if n > 0 {
                if !is_pd(c, 1e-12) {
                    return Err(HeavyError::InvalidParameter {
                        name: "idio_correlation".to_string(),
                        message: "must be positive definite".to_string(),
                    });
                }
                for i in 0..n {
                    if (c[(i, i)] - 1.0).abs() > 1e-12 {
                        return Err(HeavyError::InvalidParameter {
                            name: "idio_correlation".to_string(),
                            message: "must have a unit diagonal".to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// True state paths recorded during simulation; row/element t holds the
/// state that generated month t, so row 0 is the initial state.
#[derive(Debug, Clone)]
pub struct TruePaths {
    pub factor_variances: DMatrix<f64>,
    pub factor_correlations: Vec<DMatrix<f64>>,
    pub factor_realized_means: DMatrix<f64>,
    pub factor_realized_corr_means: Vec<DMatrix<f64>>,
    /// Per-asset conditional variances, T x N.
    pub asset_variances: DMatrix<f64>,
    /// Per-asset correlation paths, N entries of T x K.
    pub asset_correlations: Vec<DMatrix<f64>>,
    pub asset_realized_means: DMatrix<f64>,
    pub asset_realized_corr_means: Vec<DMatrix<f64>>,
    /// Joint conditional covariance used for the monthly return draw.
    pub joint_covariances: Vec<DMatrix<f64>>,
}

/// Simulation output: a panel in ingestion format plus the generating
/// states.
#[derive(Debug)]
pub struct SimulatedData {
    pub panel: ReturnPanel,
    pub paths: TruePaths,
    pub core_init: CoreInit,
    pub asset_inits: Vec<AssetInit>,
}

/// Assembles the joint (K + N) correlation matrix; returns the matrix and
/// the q_i values. Fails when the factor block is not positive definite or
/// any q_i reaches one.
pub fn assemble_joint_correlation(
    factor_corr: &DMatrix<f64>,
    asset_rows: &DMatrix<f64>,
    idio: &DMatrix<f64>,
    pd_tol: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let k = factor_corr.nrows();
    let n = asset_rows.nrows();
    if asset_rows.ncols() != k || idio.nrows() != n || idio.ncols() != n {
        return Err(HeavyError::DimensionMismatch {
            context: "joint correlation assembly".to_string(),
            expected: format!("asset rows N x {k}, idio {n} x {n}"),
            actual: format!(
                "{} x {}, {} x {}",
                asset_rows.nrows(),
                asset_rows.ncols(),
                idio.nrows(),
                idio.ncols()
            ),
        });
    }
    let chol = Cholesky::new(factor_corr.clone()).ok_or_else(|| HeavyError::PdViolation {
        time: 0,
        context: "factor correlation in joint assembly".to_string(),
        min_eigenvalue: min_eigenvalue(factor_corr),
    })?;

    let mut solved = DMatrix::zeros(k, n);
    let mut q = vec![0.0; n];
    for i in 0..n {
        let rho = asset_rows.row(i).transpose();
        let x = chol.solve(&rho);
        q[i] = rho.dot(&x);
        if !(q[i] < 1.0 - pd_tol) {
            return Err(HeavyError::PdViolation {
                time: 0,
                context: format!("joint correlation with asset index {i}"),
                min_eigenvalue: 1.0 - q[i],
            });
        }
        solved.set_column(i, &x);
    }

    let dim = k + n;
    let mut joint = DMatrix::zeros(dim, dim);
    for a in 0..k {
        for b in 0..k {
            joint[(a, b)] = factor_corr[(a, b)];
        }
    }
    for i in 0..n {
        for a in 0..k {
            joint[(k + i, a)] = asset_rows[(i, a)];
            joint[(a, k + i)] = asset_rows[(i, a)];
        }
    }
    for i in 0..n {
        for j in 0..n {
            let explained = asset_rows.row(i).transpose().dot(&solved.column(j).into_owned());
            let residual = idio[(i, j)] * ((1.0 - q[i]) * (1.0 - q[j])).sqrt();
            joint[(k + i, k + j)] = explained + residual;
        }
        joint[(k + i, k + i)] = 1.0;
    }
    Ok((joint, q))
}

struct Cursor {
    h_c: Vec<f64>,
    r: DMatrix<f64>,
    m_c: Vec<f64>,
    p: DMatrix<f64>,
    h_a: Vec<f64>,
    m_a: Vec<f64>,
    /// Fisher-domain correlation states, per asset.
    f_rho: Vec<Vec<f64>>,
    f_p: Vec<Vec<f64>>,
}

impl Cursor {
    fn rho_rows(&self) -> DMatrix<f64> {
        rows_from_fisher(&self.f_rho, self.r.nrows())
    }

    fn p_rows(&self) -> DMatrix<f64> {
        rows_from_fisher(&self.f_p, self.p.nrows())
    }
}

fn rows_from_fisher(f: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let n = f.len();
    DMatrix::from_fn(n, k, |i, j| {
        fisher_inv(f[i][j]).clamp(-CORR_OUTPUT_CLAMP, CORR_OUTPUT_CLAMP)
    })
}

/// Deterministic stationary-ish starting point: variance states at their
/// implied fixed points, correlation states at the targeting moments, and
/// Fisher states at the recursion fixed points.
fn stationary_cursor(spec: &DgpSpec) -> Cursor {
    let k = spec.n_factors();
    let n = spec.n_assets();
    let mut m_c = Vec::with_capacity(k);
    let mut h_c = Vec::with_capacity(k);
    for j in 0..k {
        let me = &spec.core.realized_var_eq[j];
        let m_bar = me.intercept / (1.0 - 0.5 * (me.arch_pos + me.arch_neg) - me.persistence);
        let ve = &spec.core.var_eq[j];
        let h_bar = (ve.intercept + 0.5 * (ve.arch_pos + ve.arch_neg) * m_bar)
            / (1.0 - ve.persistence);
        m_c.push(m_bar.max(1e-12));
        h_c.push(h_bar.max(1e-12));
    }
    let mut h_a = Vec::with_capacity(n);
    let mut m_a = Vec::with_capacity(n);
    let mut f_rho = Vec::with_capacity(n);
    let mut f_p = Vec::with_capacity(n);
    for a in &spec.assets {
        let me = &a.realized_var_eq;
        let m_bar = me.intercept / (1.0 - 0.5 * (me.arch_pos + me.arch_neg) - me.persistence);
        let ve = &a.var_eq;
        let h_bar = (ve.intercept + 0.5 * (ve.arch_pos + ve.arch_neg) * m_bar)
            / (1.0 - ve.persistence);
        m_a.push(m_bar.max(1e-12));
        h_a.push(h_bar.max(1e-12));
        let fp = a.realized_corr_eq.intercept
            / (1.0 - a.realized_corr_eq.arch - a.realized_corr_eq.persistence);
        let fr = (a.corr_eq.intercept + a.corr_eq.arch * fp) / (1.0 - a.corr_eq.persistence);
        f_p.push(vec![fp; k]);
        f_rho.push(vec![fr; k]);
    }
    Cursor {
        h_c,
        r: spec.core.corr_target.clone(),
        m_c,
        p: spec.core.realized_corr_target.clone(),
        h_a,
        m_a,
        f_rho,
        f_p,
    }
}

struct MonthDraw {
    daily: DMatrix<f64>,
    monthly: DVector<f64>,
    joint_cov: DMatrix<f64>,
    rv_pos: Vec<f64>,
    rv_neg: Vec<f64>,
    rl: DMatrix<f64>,
}

fn draw_month(
    spec: &DgpSpec,
    cursor: &Cursor,
    idio: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    pd_tol: f64,
) -> Result<MonthDraw> {
    let k = spec.n_factors();
    let n = spec.n_assets();
    let dim = k + n;
    let d = spec.days_per_month;

    // Realized-mean covariance for the daily draws.
    let (p_joint, _) = assemble_joint_correlation(&cursor.p, &cursor.p_rows(), idio, pd_tol)?;
    let mut scale_m = Vec::with_capacity(dim);
    scale_m.extend(cursor.m_c.iter().map(|x| x.sqrt()));
    scale_m.extend(cursor.m_a.iter().map(|x| x.sqrt()));
    let mut omega = p_joint;
    for a in 0..dim {
        for b in 0..dim {
            omega[(a, b)] *= scale_m[a] * scale_m[b];
        }
    }
    let omega_chol = Cholesky::new(omega).ok_or_else(|| {
        HeavyError::Simulation("realized-mean covariance lost positive definiteness".to_string())
    })?;
    let l_daily = omega_chol.l() / (d as f64).sqrt();

    let mut daily = DMatrix::zeros(d, dim);
    for row in 0..d {
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let x = &l_daily * z;
        for c in 0..dim {
            daily[(row, c)] = x[c];
        }
    }

    // Conditional covariance for the monthly return draw.
    let (r_joint, _) = assemble_joint_correlation(&cursor.r, &cursor.rho_rows(), idio, pd_tol)?;
    let mut scale_h = Vec::with_capacity(dim);
    scale_h.extend(cursor.h_c.iter().map(|x| x.sqrt()));
    scale_h.extend(cursor.h_a.iter().map(|x| x.sqrt()));
    let mut joint_cov = r_joint;
    for a in 0..dim {
        for b in 0..dim {
            joint_cov[(a, b)] *= scale_h[a] * scale_h[b];
        }
    }
    let h_chol = Cholesky::new(joint_cov.clone()).ok_or_else(|| {
        HeavyError::Simulation("conditional covariance lost positive definiteness".to_string())
    })?;
    let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let monthly = h_chol.l() * z;

    // Realized measures exactly as the ingestion path computes them.
    let mut rv_pos = vec![0.0; dim];
    let mut rv_neg = vec![0.0; dim];
    for c in 0..dim {
        let col: Vec<f64> = daily.column(c).iter().cloned().collect();
        let (p, ng) = signed_semivariances(&col);
        rv_pos[c] = p;
        rv_neg[c] = ng;
        if p + ng <= 0.0 {
            return Err(HeavyError::Simulation(format!(
                "drawn month has zero realized variance in series {c}"
            )));
        }
    }
    let rc = realized_covariance(&daily);
    let rl = realized_correlation_matrix(&rc)
        .map_err(|e| HeavyError::Simulation(format!("degenerate drawn month: {e}")))?;

    Ok(MonthDraw {
        daily,
        monthly,
        joint_cov,
        rv_pos,
        rv_neg,
        rl,
    })
}

/// Advances all states with the model recursions; returns None when the
/// updated states leave the feasible region.
fn advance(
    spec: &DgpSpec,
    cursor: &Cursor,
    draw: &MonthDraw,
    idio: &DMatrix<f64>,
    pd_tol: f64,
) -> Option<Cursor> {
    let k = spec.n_factors();
    let n = spec.n_assets();

    let mut h_c = vec![0.0; k];
    let mut m_c = vec![0.0; k];
    for j in 0..k {
        let v = draw.rv_pos[j] + draw.rv_neg[j];
        let positive = draw.monthly[j] > 0.0;
        h_c[j] = variance_step(&spec.core.var_eq[j], v, positive, cursor.h_c[j]);
        m_c[j] = realized_mean_step(
            &spec.core.realized_var_eq[j],
            draw.rv_pos[j],
            draw.rv_neg[j],
            cursor.m_c[j],
        );
        if !(h_c[j].is_finite() && h_c[j] > 0.0 && m_c[j].is_finite() && m_c[j] > 0.0) {
            return None;
        }
    }

    let rl_factors = draw.rl.view((0, 0), (k, k)).into_owned();
    let intercept = correlation_intercept(
        spec.core.corr,
        &spec.core.corr_target,
        &spec.core.realized_corr_target,
    );
    let r = correlation_step(&intercept, spec.core.corr, &rl_factors, &cursor.r);
    let p = realized_corr_step(
        spec.core.realized_corr,
        &spec.core.realized_corr_target,
        &rl_factors,
        &cursor.p,
    );
    if !is_pd(&r, pd_tol) || !is_pd(&p, pd_tol) {
        return None;
    }

    let mut h_a = vec![0.0; n];
    let mut m_a = vec![0.0; n];
    let mut f_rho = Vec::with_capacity(n);
    let mut f_p = Vec::with_capacity(n);
    for i in 0..n {
        let v_pos = draw.rv_pos[k + i];
        let v_neg = draw.rv_neg[k + i];
        let positive = draw.monthly[k + i] > 0.0;
        h_a[i] = variance_step(&spec.assets[i].var_eq, v_pos + v_neg, positive, cursor.h_a[i]);
        m_a[i] = realized_mean_step(&spec.assets[i].realized_var_eq, v_pos, v_neg, cursor.m_a[i]);
        if !(h_a[i].is_finite() && h_a[i] > 0.0 && m_a[i].is_finite() && m_a[i] > 0.0) {
            return None;
        }
        let f_rl: Vec<f64> = (0..k)
            .map(|j| fisher(clamp_correlation(draw.rl[(k + i, j)]).0))
            .collect();
        let mut next_rho = vec![0.0; k];
        let mut next_p = vec![0.0; k];
        fisher_step(&spec.assets[i].corr_eq, &f_rl, &cursor.f_rho[i], &mut next_rho);
        fisher_step(&spec.assets[i].realized_corr_eq, &f_rl, &cursor.f_p[i], &mut next_p);
        if next_rho.iter().chain(next_p.iter()).any(|x| !x.is_finite()) {
            return None;
        }
        f_rho.push(next_rho);
        f_p.push(next_p);
    }

    let next = Cursor {
        h_c,
        r,
        m_c,
        p,
        h_a,
        m_a,
        f_rho,
        f_p,
    };
    // The next month must be able to assemble both joint matrices.
    if assemble_joint_correlation(&next.r, &next.rho_rows(), idio, pd_tol).is_err() {
        return None;
    }
    if assemble_joint_correlation(&next.p, &next.p_rows(), idio, pd_tol).is_err() {
        return None;
    }
    Some(next)
}

/// A documented baseline parameter set with realistic persistence and
/// leverage asymmetry, usable at any (K, N, T). Callers may adjust fields
/// of the returned spec before simulating.
pub fn baseline_spec(k: usize, n: usize, t: usize, seed: u64) -> DgpSpec {
    use crate::asset_model::CorrVecEqParams;
    use crate::core_model::{CorrParams, VarianceEqParams};

    let var_eq = VarianceEqParams {
        intercept: 4e-4,
        arch_pos: 0.25,
        arch_neg: 0.45,
        persistence: 0.55,
    };
    let m_eq = VarianceEqParams {
        intercept: 3e-4,
        arch_pos: 0.20,
        arch_neg: 0.30,
        persistence: 0.60,
    };
    let mut corr_target = DMatrix::from_element(k, k, 0.35);
    let mut realized_target = DMatrix::from_element(k, k, 0.40);
    for i in 0..k {
        corr_target[(i, i)] = 1.0;
        realized_target[(i, i)] = 1.0;
    }
    let asset = AssetModelParams {
        var_eq: VarianceEqParams {
            intercept: 5e-4,
            arch_pos: 0.20,
            arch_neg: 0.40,
            persistence: 0.50,
        },
        corr_eq: CorrVecEqParams {
            intercept: 0.06,
            arch: 0.15,
            persistence: 0.75,
        },
        realized_var_eq: VarianceEqParams {
            intercept: 4e-4,
            arch_pos: 0.18,
            arch_neg: 0.28,
            persistence: 0.55,
        },
        realized_corr_eq: CorrVecEqParams {
            intercept: 0.06,
            arch: 0.15,
            persistence: 0.75,
        },
    };
    DgpSpec {
        core: CoreModelParams {
            var_eq: vec![var_eq; k],
            corr: CorrParams { alpha: 0.12, beta: 0.80 },
            realized_var_eq: vec![m_eq; k],
            realized_corr: CorrParams { alpha: 0.15, beta: 0.78 },
            corr_target,
            realized_corr_target: realized_target,
        },
        assets: vec![asset; n],
        factor_names: (0..k).map(|j| format!("f{j}")).collect(),
        asset_names: (0..n).map(|i| format!("a{i:02}")).collect(),
        idio_correlation: None,
        days_per_month: 21,
        n_months: t,
        burn_in: 24,
        seed,
        start: YearMonth::new(2000, 1).expect("january is a valid month"),
    }
}

/// Simulates a complete panel plus its generating paths.
pub fn simulate(spec: &DgpSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let k = spec.n_factors();
    let n = spec.n_assets();
    let t = spec.n_months;
    let dim = k + n;
    let pd_tol = crate::linalg::PD_TOL;
    let idio = spec
        .idio_correlation
        .clone()
        .unwrap_or_else(|| DMatrix::identity(n, n));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cursor = stationary_cursor(spec);

    // Burn-in: advance without recording.
    for _ in 0..spec.burn_in {
        let mut ok = false;
        for _ in 0..MAX_REDRAWS {
            let draw = draw_month(spec, &cursor, &idio, &mut rng, pd_tol)?;
            if let Some(next) = advance(spec, &cursor, &draw, &idio, pd_tol) {
                cursor = next;
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(HeavyError::Simulation(format!(
                "burn-in month redrawn {MAX_REDRAWS} times without a feasible update"
            )));
        }
    }

    let core_init = CoreInit {
        variance: cursor.h_c.clone(),
        corr: cursor.r.clone(),
        realized_var: cursor.m_c.clone(),
        realized_corr: cursor.p.clone(),
    };
    let rho0 = cursor.rho_rows();
    let p0 = cursor.p_rows();
    let asset_inits: Vec<AssetInit> = (0..n)
        .map(|i| AssetInit {
            variance: cursor.h_a[i],
            corr: rho0.row(i).iter().cloned().collect(),
            realized_var: cursor.m_a[i],
            realized_corr: p0.row(i).iter().cloned().collect(),
        })
        .collect();

    let mut paths = TruePaths {
        factor_variances: DMatrix::zeros(t, k),
        factor_correlations: Vec::with_capacity(t),
        factor_realized_means: DMatrix::zeros(t, k),
        factor_realized_corr_means: Vec::with_capacity(t),
        asset_variances: DMatrix::zeros(t, n),
        asset_correlations: vec![DMatrix::zeros(t, k); n],
        asset_realized_means: DMatrix::zeros(t, n),
        asset_realized_corr_means: vec![DMatrix::zeros(t, k); n],
        joint_covariances: Vec::with_capacity(t),
    };

    let mut months = Vec::with_capacity(t);
    let mut monthly = DMatrix::zeros(t, dim);
    let mut daily_blocks = Vec::with_capacity(t);
    let mut daily_dates = Vec::with_capacity(t);
    let mut ym = spec.start;

    for row in 0..t {
        // Record the generating state.
        for j in 0..k {
            paths.factor_variances[(row, j)] = cursor.h_c[j];
            paths.factor_realized_means[(row, j)] = cursor.m_c[j];
        }
        paths.factor_correlations.push(cursor.r.clone());
        paths.factor_realized_corr_means.push(cursor.p.clone());
        let rho = cursor.rho_rows();
        let pr = cursor.p_rows();
        for i in 0..n {
            paths.asset_variances[(row, i)] = cursor.h_a[i];
            paths.asset_realized_means[(row, i)] = cursor.m_a[i];
            for j in 0..k {
                paths.asset_correlations[i][(row, j)] = rho[(i, j)];
                paths.asset_realized_corr_means[i][(row, j)] = pr[(i, j)];
            }
        }

        let mut committed = false;
        for _ in 0..MAX_REDRAWS {
            let draw = draw_month(spec, &cursor, &idio, &mut rng, pd_tol)?;
            if let Some(next) = advance(spec, &cursor, &draw, &idio, pd_tol) {
                paths.joint_covariances.push(draw.joint_cov.clone());
                for c in 0..dim {
                    monthly[(row, c)] = draw.monthly[c];
                }
                daily_blocks.push(draw.daily.clone());
                daily_dates.push(
                    (1..=spec.days_per_month as u32)
                        .map(|d| {
                            chrono::NaiveDate::from_ymd_opt(ym.year, ym.month, d)
                                .expect("synthetic day in 1..=28 is always valid")
                        })
                        .collect(),
                );
                months.push(ym);
                cursor = next;
                committed = true;
                break;
            }
        }
        if !committed {
            return Err(HeavyError::Simulation(format!(
                "month {ym} redrawn {MAX_REDRAWS} times without a feasible update"
            )));
        }
        ym = ym.next();
    }

    let panel = ReturnPanel::from_parts(
        months,
        spec.factor_names.clone(),
        spec.asset_names.clone(),
        monthly,
        daily_blocks,
        daily_dates,
    )?;

    Ok(SimulatedData {
        panel,
        paths,
        core_init,
        asset_inits,
    })
}
