//! Shared generators and straightline reference implementations used by
//! the oracle and acceptance suites. The references are deliberately plain
//! loops over the defining equations so they stay independent of the
//! library's vectorized implementations.
#![allow(dead_code)]

use hdheavy::asset_model::{
    clamp_correlation, filter_asset, llf_asset_conditional, llf_asset_realized, AssetModelParams,
    CorrVecEqParams, CORR_OUTPUT_CLAMP,
};
use hdheavy::core_model::{
    filter_core, llf_correlations, llf_realized_correlations, llf_realized_variances,
    llf_variances, CoreModelParams, CorrParams, VarianceEqParams,
};
use hdheavy::linalg::PD_TOL;
use hdheavy::measures::RealizedMeasures;
use hdheavy::panel::YearMonth;
use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn assert_rel(a: f64, b: f64, tol: f64, what: &str) -> f64 {
    if a == b {
        return 0.0;
    }
    let rel = (a - b).abs() / a.abs().max(b.abs());
    assert!(rel <= tol, "{what}: {a} vs {b} (rel {rel:.3e})");
    rel
}

/// Like assert_rel but with the denominator floored at one, matching the
/// likelihood comparisons where sums can legitimately pass near zero.
pub fn assert_rel_floored(a: f64, b: f64, tol: f64, what: &str) -> f64 {
    let denom = 1.0f64.max(a.abs()).max(b.abs());
    let rel = (a - b).abs() / denom;
    assert!(rel <= tol, "{what}: {a} vs {b} (rel {rel:.3e})");
    rel
}

/// Random unit-diagonal correlation matrix, blended toward the identity so
/// the smallest eigenvalue stays comfortably above 0.5.
pub fn random_corr(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let rows = k + 3;
    let z = DMatrix::<f64>::from_fn(rows, k, |_, _| StandardNormal.sample(rng));
    let s = z.transpose() * &z / rows as f64;
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            c[(i, j)] = 0.5 * s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt();
        }
    }
    for i in 0..k {
        c[(i, i)] = 1.0;
    }
    c
}

/// Random positive definite covariance matrix at the given scale.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let z = DMatrix::<f64>::from_fn(n + 4, n, |_, _| StandardNormal.sample(rng));
    let mut s = z.transpose() * &z * (scale / (n + 4) as f64);
    for i in 0..n {
        s[(i, i)] += 0.1 * scale;
    }
    s
}

pub fn random_variance_eq(rng: &mut ChaCha8Rng) -> VarianceEqParams {
    VarianceEqParams {
        intercept: rng.random_range(1e-5..5e-4),
        arch_pos: rng.random_range(0.01..0.3),
        arch_neg: rng.random_range(0.01..0.3),
        persistence: rng.random_range(0.3..0.8),
    }
}

pub struct Draw {
    pub params: CoreModelParams,
    pub assets: Vec<AssetModelParams>,
    pub returns: DMatrix<f64>,
    pub asset_returns: DMatrix<f64>,
    pub measures: RealizedMeasures,
}

/// One random model and dataset with K <= 4 factors, N <= 5 assets,
/// T = 200 months, every implied matrix comfortably feasible.
pub fn random_draw(seed: u64) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=4usize);
    let n = rng.random_range(1..=5usize);
    let t = 200usize;

    let mut var_eq = Vec::new();
    let mut realized_var_eq = Vec::new();
    for _ in 0..k {
        var_eq.push(VarianceEqParams {
            intercept: rng.random_range(1e-5..5e-4),
            arch_pos: rng.random_range(0.01..0.3),
            arch_neg: rng.random_range(0.01..0.3),
            persistence: rng.random_range(0.3..0.9),
        });
        realized_var_eq.push(VarianceEqParams {
            intercept: rng.random_range(1e-5..5e-4),
            arch_pos: rng.random_range(0.05..0.3),
            arch_neg: rng.random_range(0.05..0.3),
            persistence: rng.random_range(0.3..0.6),
        });
    }
    let corr = CorrParams {
        alpha: rng.random_range(0.02..0.1),
        beta: rng.random_range(0.5..0.85),
    };
    let realized_corr = CorrParams {
        alpha: rng.random_range(0.02..0.1),
        beta: rng.random_range(0.5..0.85),
    };
    let corr_target = random_corr(&mut rng, k);
    let realized_corr_target = random_corr(&mut rng, k);

    let returns = DMatrix::from_fn(t, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.02 * z
    });
    let mut factor_rv = DMatrix::zeros(t, k);
    let mut factor_rv_pos = DMatrix::zeros(t, k);
    let mut factor_rv_neg = DMatrix::zeros(t, k);
    for row in 0..t {
        for j in 0..k {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = 4e-4 * (0.5 * z).exp();
            let split = rng.random_range(0.2..0.8);
            factor_rv[(row, j)] = v;
            factor_rv_pos[(row, j)] = split * v;
            factor_rv_neg[(row, j)] = (1.0 - split) * v;
        }
    }
    let factor_rcorr: Vec<DMatrix<f64>> = (0..t).map(|_| random_corr(&mut rng, k)).collect();
    let factor_rcov: Vec<DMatrix<f64>> = factor_rcorr
        .iter()
        .enumerate()
        .map(|(row, c)| {
            let mut m = c.clone();
            for a in 0..k {
                for b in 0..k {
                    m[(a, b)] *= (factor_rv[(row, a)] * factor_rv[(row, b)]).sqrt();
                }
            }
            m
        })
        .collect();

    let mut assets = Vec::new();
    for _ in 0..n {
        assets.push(AssetModelParams {
            var_eq: VarianceEqParams {
                intercept: rng.random_range(1e-5..5e-4),
                arch_pos: rng.random_range(0.01..0.3),
                arch_neg: rng.random_range(0.01..0.3),
                persistence: rng.random_range(0.3..0.9),
            },
            corr_eq: CorrVecEqParams {
                intercept: rng.random_range(-0.05..0.05),
                arch: rng.random_range(0.02..0.2),
                persistence: rng.random_range(0.3..0.7),
            },
            realized_var_eq: VarianceEqParams {
                intercept: rng.random_range(1e-5..5e-4),
                arch_pos: rng.random_range(0.05..0.3),
                arch_neg: rng.random_range(0.05..0.3),
                persistence: rng.random_range(0.3..0.6),
            },
            realized_corr_eq: CorrVecEqParams {
                intercept: rng.random_range(-0.05..0.05),
                arch: rng.random_range(0.02..0.2),
                persistence: rng.random_range(0.3..0.7),
            },
        });
    }
    let asset_returns = DMatrix::from_fn(t, n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.025 * z
    });
    let mut asset_rv = DMatrix::zeros(t, n);
    let mut asset_rv_pos = DMatrix::zeros(t, n);
    let mut asset_rv_neg = DMatrix::zeros(t, n);
    for row in 0..t {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = 5e-4 * (0.5 * z).exp();
            let split = rng.random_range(0.2..0.8);
            asset_rv[(row, i)] = v;
            asset_rv_pos[(row, i)] = split * v;
            asset_rv_neg[(row, i)] = (1.0 - split) * v;
        }
    }
    // Modest asset-factor realized correlations keep every implied joint
    // correlation matrix feasible for any draw.
    let asset_factor_rcorr: Vec<DMatrix<f64>> = (0..t)
        .map(|_| {
            DMatrix::from_fn(n, k, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.4 * (0.7 * z).tanh() / (k as f64).sqrt()
            })
        })
        .collect();
    let asset_factor_rcov: Vec<DMatrix<f64>> = asset_factor_rcorr
        .iter()
        .enumerate()
        .map(|(row, c)| {
            DMatrix::from_fn(n, k, |i, j| {
                c[(i, j)] * (asset_rv[(row, i)] * factor_rv[(row, j)]).sqrt()
            })
        })
        .collect();

    let months: Vec<YearMonth> = (0..t)
        .map(|i| YearMonth::new(2000 + (i / 12) as i32, (i % 12) as u32 + 1).unwrap())
        .collect();
    let measures = RealizedMeasures {
        months,
        factor_names: (0..k).map(|j| format!("f{j}")).collect(),
        asset_names: (0..n).map(|i| format!("a{i}")).collect(),
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
    };

    Draw {
        params: CoreModelParams {
            var_eq,
            corr,
            realized_var_eq,
            realized_corr,
            corr_target,
            realized_corr_target,
        },
        assets,
        returns,
        asset_returns,
        measures,
    }
}

/// Reference conditional variance path: h_1 = mean(v),
/// h_t = w + a^+ v_{t-1} 1{r_{t-1} > 0} + a^- v_{t-1} 1{r_{t-1} <= 0} + b h_{t-1}.
pub fn oracle_variance(eq: &VarianceEqParams, v: &[f64], r: &[f64], init: Option<f64>) -> Vec<f64> {
    let t = v.len();
    let mut h = vec![0.0; t];
    h[0] = init.unwrap_or_else(|| v.iter().sum::<f64>() / t as f64);
    for s in 1..t {
        let arch = if r[s - 1] > 0.0 { eq.arch_pos } else { eq.arch_neg };
        h[s] = eq.intercept + arch * v[s - 1] + eq.persistence * h[s - 1];
    }
    h
}

/// Reference realized-variance mean path: m_1 = mean(v),
/// m_t = w + a^+ v^+_{t-1} + a^- v^-_{t-1} + b m_{t-1}.
pub fn oracle_realized_mean(
    eq: &VarianceEqParams,
    v_pos: &[f64],
    v_neg: &[f64],
    init: Option<f64>,
) -> Vec<f64> {
    let t = v_pos.len();
    let mut m = vec![0.0; t];
    m[0] = init
        .unwrap_or_else(|| v_pos.iter().zip(v_neg).map(|(p, n)| p + n).sum::<f64>() / t as f64);
    for s in 1..t {
        m[s] = eq.intercept + eq.arch_pos * v_pos[s - 1] + eq.arch_neg * v_neg[s - 1]
            + eq.persistence * m[s - 1];
    }
    m
}

/// Reference conditional correlation path:
/// R_t = (1 - beta) R_bar - alpha P_bar + alpha RL_{t-1} + beta R_{t-1},
/// diagonal pinned to one, R_1 = R_bar.
pub fn oracle_correlation(
    corr: CorrParams,
    r_bar: &DMatrix<f64>,
    p_bar: &DMatrix<f64>,
    rl: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let k = r_bar.nrows();
    let mut intercept = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            intercept[(i, j)] = r_bar[(i, j)] * (1.0 - corr.beta) - p_bar[(i, j)] * corr.alpha;
        }
    }
    let mut path = vec![r_bar.clone()];
    for s in 1..rl.len() {
        let prev = path[s - 1].clone();
        let mut next = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                next[(i, j)] =
                    intercept[(i, j)] + rl[s - 1][(i, j)] * corr.alpha + prev[(i, j)] * corr.beta;
            }
            next[(i, i)] = 1.0;
        }
        path.push(next);
    }
    path
}

/// Reference realized-correlation mean path:
/// P_t = (1 - alpha - beta) P_bar + alpha RL_{t-1} + beta P_{t-1}, P_1 = P_bar.
pub fn oracle_realized_corr(
    corr: CorrParams,
    p_bar: &DMatrix<f64>,
    rl: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let k = p_bar.nrows();
    let mut path = vec![p_bar.clone()];
    for s in 1..rl.len() {
        let prev = path[s - 1].clone();
        let mut next = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                next[(i, j)] = p_bar[(i, j)] * (1.0 - corr.alpha - corr.beta)
                    + rl[s - 1][(i, j)] * corr.alpha
                    + prev[(i, j)] * corr.beta;
            }
            next[(i, i)] = 1.0;
        }
        path.push(next);
    }
    path
}

/// Reference Fisher-domain correlation-vector path:
/// f_t = c + a atanh(RL_{t-1}) + b f_{t-1}, rho_t = tanh(f_t),
/// f_1 from the elementwise mean of the realized correlations.
pub fn oracle_fisher(eq: &CorrVecEqParams, rl: &DMatrix<f64>) -> DMatrix<f64> {
    let t = rl.nrows();
    let k = rl.ncols();
    let mut f_rl = DMatrix::zeros(t, k);
    for row in 0..t {
        for j in 0..k {
            f_rl[(row, j)] = clamp_correlation(rl[(row, j)]).0.atanh();
        }
    }
    let mut f_prev: Vec<f64> = (0..k)
        .map(|j| {
            let m = rl.column(j).sum() / t as f64;
            clamp_correlation(m).0.atanh()
        })
        .collect();
    let mut rho = DMatrix::zeros(t, k);
    for j in 0..k {
        rho[(0, j)] = f_prev[j].tanh().clamp(-CORR_OUTPUT_CLAMP, CORR_OUTPUT_CLAMP);
    }
    for row in 1..t {
        let mut f_next = vec![0.0; k];
        for j in 0..k {
            f_next[j] = eq.intercept + eq.arch * f_rl[(row - 1, j)] + eq.persistence * f_prev[j];
            rho[(row, j)] = f_next[j].tanh().clamp(-CORR_OUTPUT_CLAMP, CORR_OUTPUT_CLAMP);
        }
        f_prev = f_next;
    }
    rho
}

/// Compares every quasi-likelihood component against direct summation with
/// explicit matrix inverses over `n_instances` random instances. Returns
/// the largest floored relative deviation seen.
pub fn llf_oracle_sweep(n_instances: u64, tol: f64) -> f64 {
    let mut worst = 0.0f64;
    for instance in 0..n_instances {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + instance);
        let k = rng.random_range(1..=4usize);
        let t = 150usize;

        let eqs: Vec<VarianceEqParams> = (0..k).map(|_| random_variance_eq(&mut rng)).collect();
        let m_eqs: Vec<VarianceEqParams> = (0..k).map(|_| random_variance_eq(&mut rng)).collect();
        let returns = DMatrix::from_fn(t, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.02 * z
        });
        let mut rv = DMatrix::zeros(t, k);
        let mut rv_pos = DMatrix::zeros(t, k);
        let mut rv_neg = DMatrix::zeros(t, k);
        for row in 0..t {
            for j in 0..k {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = 4e-4 * (0.5 * z).exp();
                let split = rng.random_range(0.2..0.8);
                rv[(row, j)] = v;
                rv_pos[(row, j)] = split * v;
                rv_neg[(row, j)] = (1.0 - split) * v;
            }
        }

        // Conditional variance QML: -1/2 sum_j sum_t [ log h + r^2 / h ].
        let lib_v = llf_variances(&eqs, &rv, &returns);
        let mut ref_v = 0.0;
        for j in 0..k {
            let v: Vec<f64> = rv.column(j).iter().cloned().collect();
            let r: Vec<f64> = returns.column(j).iter().cloned().collect();
            let h = oracle_variance(&eqs[j], &v, &r, None);
            for row in 0..t {
                ref_v += h[row].ln() + r[row] * r[row] / h[row];
            }
        }
        worst = worst.max(assert_rel_floored(
            lib_v,
            -0.5 * ref_v,
            tol,
            &format!("instance {instance} variance llf"),
        ));

        // Realized-variance QML: -1/2 sum [ log m + v / m ].
        let lib_m = llf_realized_variances(&m_eqs, &rv_pos, &rv_neg, &rv);
        let mut ref_m = 0.0;
        for j in 0..k {
            let vp: Vec<f64> = rv_pos.column(j).iter().cloned().collect();
            let vn: Vec<f64> = rv_neg.column(j).iter().cloned().collect();
            let m = oracle_realized_mean(&m_eqs[j], &vp, &vn, None);
            for row in 0..t {
                ref_m += m[row].ln() + (vp[row] + vn[row]) / m[row];
            }
        }
        worst = worst.max(assert_rel_floored(
            lib_m,
            -0.5 * ref_m,
            tol,
            &format!("instance {instance} realized llf"),
        ));

        // Correlation QML: -1/2 sum [ log|R| + u' R^{-1} u ], explicit inverse.
        let corr = CorrParams {
            alpha: rng.random_range(0.02..0.1),
            beta: rng.random_range(0.5..0.85),
        };
        let r_bar = random_corr(&mut rng, k);
        let p_bar = random_corr(&mut rng, k);
        let u = DMatrix::from_fn(t, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let rl: Vec<DMatrix<f64>> = (0..t).map(|_| random_corr(&mut rng, k)).collect();
        let lib_c = llf_correlations(corr, &r_bar, &p_bar, &u, &rl, PD_TOL);
        let r_path = oracle_correlation(corr, &r_bar, &p_bar, &rl);
        let mut ref_c = 0.0;
        for row in 0..t {
            let inv = r_path[row].clone().try_inverse().expect("invertible R");
            let ut = u.row(row).transpose();
            ref_c += r_path[row].determinant().ln() + (ut.transpose() * &inv * &ut)[(0, 0)];
        }
        worst = worst.max(assert_rel_floored(
            lib_c,
            -0.5 * ref_c,
            tol,
            &format!("instance {instance} correlation llf"),
        ));

        // Realized-correlation QML (Wishart nu = 1 form):
        // -1/2 sum [ log|P| + tr((P^{-1} - I) S) ] with S the mean-scaled
        // realized covariance, all inverses explicit.
        let m_hat = DMatrix::from_fn(t, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            4e-4 * (0.3 * z).exp()
        });
        let rc: Vec<DMatrix<f64>> = (0..t)
            .map(|row| {
                let c = random_corr(&mut rng, k);
                DMatrix::from_fn(k, k, |a, b| {
                    c[(a, b)] * (rv[(row, a)] * rv[(row, b)]).sqrt()
                })
            })
            .collect();
        let rcorr = CorrParams {
            alpha: rng.random_range(0.02..0.1),
            beta: rng.random_range(0.5..0.85),
        };
        let lib_p = llf_realized_correlations(rcorr, &p_bar, &m_hat, &rc, &rl, PD_TOL);
        let p_path = oracle_realized_corr(rcorr, &p_bar, &rl);
        let mut ref_p = 0.0;
        for row in 0..t {
            let mut s = DMatrix::zeros(k, k);
            for a in 0..k {
                for b in 0..k {
                    s[(a, b)] = rc[row][(a, b)] / (m_hat[(row, a)] * m_hat[(row, b)]).sqrt();
                }
            }
            let inv = p_path[row].clone().try_inverse().expect("invertible P");
            let eye = DMatrix::identity(k, k);
            ref_p += p_path[row].determinant().ln() + ((inv - eye) * &s).trace();
        }
        worst = worst.max(assert_rel_floored(
            lib_p,
            -0.5 * ref_p,
            tol,
            &format!("instance {instance} realized correlation llf"),
        ));

        // Asset conditional QML given the core: explicit R^{-1} in both the
        // Mahalanobis ratio q and the conditional mean.
        let asset_returns: Vec<f64> = (0..t)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.025 * z
            })
            .collect();
        let h_asset: Vec<f64> = (0..t)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                5e-4 * (0.3 * z).exp()
            })
            .collect();
        let rho = DMatrix::from_fn(t, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.4 * (0.7 * z).tanh() / (k as f64).sqrt()
        });
        let lib_a = llf_asset_conditional(&asset_returns, &h_asset, &rho, &r_path, &u, PD_TOL);
        let mut ref_a = 0.0;
        for row in 0..t {
            let inv = r_path[row].clone().try_inverse().unwrap();
            let rho_t = rho.row(row).transpose();
            let x = &inv * &rho_t;
            let q = rho_t.dot(&x);
            let u_t = u.row(row).transpose();
            let cm = u_t.dot(&x);
            let ua = asset_returns[row] / h_asset[row].sqrt();
            ref_a += (h_asset[row] * (1.0 - q)).ln() + (ua - cm) * (ua - cm) / (1.0 - q);
        }
        worst = worst.max(assert_rel_floored(
            lib_a,
            -0.5 * ref_a,
            tol,
            &format!("instance {instance} asset cond llf"),
        ));

        // Asset realized QML: residual variance through the explicit inverse
        // of the factor realized covariance, then the scalar Wishart terms.
        let asset_rv: Vec<f64> = (0..t)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                5e-4 * (0.5 * z).exp()
            })
            .collect();
        let m_asset: Vec<f64> = (0..t)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                5e-4 * (0.3 * z).exp()
            })
            .collect();
        let p_asset = DMatrix::from_fn(t, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.4 * (0.7 * z).tanh() / (k as f64).sqrt()
        });
        // Asset-factor realized covariances sized so the residual stays
        // strictly positive: scale the implied correlation well below one.
        let af_rcov = DMatrix::from_fn(t, k, |row, j| {
            0.3 * (asset_rv[row] * rc[row][(j, j)]).sqrt() / (k as f64).sqrt()
        });
        let lib_ar = llf_asset_realized(
            &asset_rv,
            &m_asset,
            &p_asset,
            &p_path,
            &af_rcov,
            &rc,
            PD_TOL,
        );
        let mut ref_ar = 0.0;
        for row in 0..t {
            let inv_rc = rc[row].clone().try_inverse().unwrap();
            let rc_vec = af_rcov.row(row).transpose();
            let resid =
                (asset_rv[row] - (rc_vec.transpose() * &inv_rc * &rc_vec)[(0, 0)]).max(0.0);
            let inv_p = p_path[row].clone().try_inverse().unwrap();
            let p_vec = p_asset.row(row).transpose();
            let pic = (p_vec.transpose() * &inv_p * &p_vec)[(0, 0)];
            let scale = m_asset[row] * (1.0 - pic);
            ref_ar += scale.ln() + resid / scale;
        }
        worst = worst.max(assert_rel_floored(
            lib_ar,
            -0.5 * ref_ar,
            tol,
            &format!("instance {instance} asset realized llf"),
        ));
    }
    worst
}

/// Runs the full filter-versus-reference comparison over `n_draws` random
/// model/data draws at the given relative tolerance. Returns the largest
/// relative deviation seen.
pub fn filter_oracle_sweep(n_draws: u64, tol: f64) -> f64 {
    let mut worst = 0.0f64;
    for draw_id in 0..n_draws {
        let d = random_draw(1000 + draw_id);
        let k = d.params.n_factors();
        let t = d.returns.nrows();

        let core = filter_core(&d.params, &d.returns, &d.measures, PD_TOL, None)
            .expect("core filter on feasible draw");

        for j in 0..k {
            let v: Vec<f64> = d.measures.factor_rv.column(j).iter().cloned().collect();
            let vp: Vec<f64> = d.measures.factor_rv_pos.column(j).iter().cloned().collect();
            let vn: Vec<f64> = d.measures.factor_rv_neg.column(j).iter().cloned().collect();
            let r: Vec<f64> = d.returns.column(j).iter().cloned().collect();
            let h_ref = oracle_variance(&d.params.var_eq[j], &v, &r, None);
            let m_ref = oracle_realized_mean(&d.params.realized_var_eq[j], &vp, &vn, None);
            for row in 0..t {
                worst = worst.max(assert_rel(
                    core.variances[(row, j)],
                    h_ref[row],
                    tol,
                    &format!("draw {draw_id} h[{row},{j}]"),
                ));
                worst = worst.max(assert_rel(
                    core.realized_var_means[(row, j)],
                    m_ref[row],
                    tol,
                    &format!("draw {draw_id} m[{row},{j}]"),
                ));
                worst = worst.max(assert_rel(
                    core.degarched[(row, j)],
                    d.returns[(row, j)] / h_ref[row].sqrt(),
                    tol,
                    &format!("draw {draw_id} u[{row},{j}]"),
                ));
            }
        }

        let r_ref = oracle_correlation(
            d.params.corr,
            &d.params.corr_target,
            &d.params.realized_corr_target,
            &d.measures.factor_rcorr,
        );
        let p_ref = oracle_realized_corr(
            d.params.realized_corr,
            &d.params.realized_corr_target,
            &d.measures.factor_rcorr,
        );
        for row in 0..t {
            for a in 0..k {
                for b in 0..k {
                    worst = worst.max(assert_rel(
                        core.correlations[row][(a, b)],
                        r_ref[row][(a, b)],
                        tol,
                        &format!("draw {draw_id} R[{row}]({a},{b})"),
                    ));
                    worst = worst.max(assert_rel(
                        core.realized_corr_means[row][(a, b)],
                        p_ref[row][(a, b)],
                        tol,
                        &format!("draw {draw_id} P[{row}]({a},{b})"),
                    ));
                    let h_cov = r_ref[row][(a, b)]
                        * (core.variances[(row, a)] * core.variances[(row, b)]).sqrt();
                    worst = worst.max(assert_rel(
                        core.covariances[row][(a, b)],
                        h_cov,
                        tol,
                        &format!("draw {draw_id} H[{row}]({a},{b})"),
                    ));
                }
            }
        }

        let corr_chols: Vec<Cholesky<f64, nalgebra::Dyn>> = core
            .correlations
            .iter()
            .map(|m| Cholesky::new(m.clone()).expect("PD correlation"))
            .collect();
        let realized_chols: Vec<Cholesky<f64, nalgebra::Dyn>> = core
            .realized_corr_means
            .iter()
            .map(|m| Cholesky::new(m.clone()).expect("PD realized correlation"))
            .collect();

        for (i, asset) in d.assets.iter().enumerate() {
            let r: Vec<f64> = d.asset_returns.column(i).iter().cloned().collect();
            let v: Vec<f64> = d.measures.asset_rv.column(i).iter().cloned().collect();
            let vp: Vec<f64> = d.measures.asset_rv_pos.column(i).iter().cloned().collect();
            let vn: Vec<f64> = d.measures.asset_rv_neg.column(i).iter().cloned().collect();
            let rl = d.measures.asset_corr_path(i);
            let state = filter_asset(
                asset,
                &r,
                &v,
                &vp,
                &vn,
                &rl,
                None,
                PD_TOL,
                &corr_chols,
                &realized_chols,
            )
            .expect("asset filter on feasible draw");

            let h_ref = oracle_variance(&asset.var_eq, &v, &r, None);
            let m_ref = oracle_realized_mean(&asset.realized_var_eq, &vp, &vn, None);
            let rho_ref = oracle_fisher(&asset.corr_eq, &rl);
            let pr_ref = oracle_fisher(&asset.realized_corr_eq, &rl);
            for row in 0..t {
                worst = worst.max(assert_rel(
                    state.variances[row],
                    h_ref[row],
                    tol,
                    &format!("draw {draw_id} asset {i} h[{row}]"),
                ));
                worst = worst.max(assert_rel(
                    state.realized_var_means[row],
                    m_ref[row],
                    tol,
                    &format!("draw {draw_id} asset {i} m[{row}]"),
                ));
                for j in 0..k {
                    worst = worst.max(assert_rel(
                        state.correlations[(row, j)],
                        rho_ref[(row, j)],
                        tol,
                        &format!("draw {draw_id} asset {i} rho[{row},{j}]"),
                    ));
                    worst = worst.max(assert_rel(
                        state.realized_corr_means[(row, j)],
                        pr_ref[(row, j)],
                        tol,
                        &format!("draw {draw_id} asset {i} p[{row},{j}]"),
                    ));
                }
            }
        }
    }
    worst
}
