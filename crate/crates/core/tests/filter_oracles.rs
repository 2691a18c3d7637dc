//! Straightline reference implementations of every recursion, compared
//! against the library filters on random parameter and data draws. The
//! references are written as plain loops over the defining equations, so
//! any lag misalignment, sign routing mistake, or transposed index in the
//! production filters shows up as a mismatch.

mod common;

use common::{assert_rel, filter_oracle_sweep, oracle_variance, random_draw};
use hdheavy::asset_model::{filter_asset, AssetInit};
use hdheavy::core_model::{filter_core, CoreInit};
use hdheavy::linalg::PD_TOL;
use nalgebra::Cholesky;
use std::time::Instant;

const REL_TOL: f64 = 1e-13;

fn assert_close(a: f64, b: f64, what: &str) {
    assert_rel(a, b, REL_TOL, what);
}

#[test]
fn filters_match_straightline_references_on_random_draws() {
    let started = Instant::now();
    let worst = filter_oracle_sweep(100, REL_TOL);
    assert!(worst <= REL_TOL, "worst relative deviation {worst:.3e}");
    assert!(
        started.elapsed().as_secs_f64() < 10.0,
        "filter oracle sweep took {:?}",
        started.elapsed()
    );
}

#[test]
fn explicit_init_overrides_are_honored_by_both_paths() {
    let d = random_draw(77);
    let k = d.params.n_factors();
    let t = d.returns.nrows();
    let init = CoreInit {
        variance: (0..k).map(|j| 3e-4 + 1e-5 * j as f64).collect(),
        corr: d.params.corr_target.clone(),
        realized_var: (0..k).map(|j| 2e-4 + 1e-5 * j as f64).collect(),
        realized_corr: d.params.realized_corr_target.clone(),
    };
    let core = filter_core(&d.params, &d.returns, &d.measures, PD_TOL, Some(&init)).unwrap();
    for j in 0..k {
        let v: Vec<f64> = d.measures.factor_rv.column(j).iter().cloned().collect();
        let r: Vec<f64> = d.returns.column(j).iter().cloned().collect();
        let h_ref = oracle_variance(&d.params.var_eq[j], &v, &r, Some(init.variance[j]));
        for row in 0..t {
            assert_close(core.variances[(row, j)], h_ref[row], &format!("h[{row},{j}]"));
        }
    }

    let asset = &d.assets[0];
    let r: Vec<f64> = d.asset_returns.column(0).iter().cloned().collect();
    let v: Vec<f64> = d.measures.asset_rv.column(0).iter().cloned().collect();
    let vp: Vec<f64> = d.measures.asset_rv_pos.column(0).iter().cloned().collect();
    let vn: Vec<f64> = d.measures.asset_rv_neg.column(0).iter().cloned().collect();
    let rl = d.measures.asset_corr_path(0);
    let corr_chols: Vec<_> = core
        .correlations
        .iter()
        .map(|m| Cholesky::new(m.clone()).unwrap())
        .collect();
    let realized_chols: Vec<_> = core
        .realized_corr_means
        .iter()
        .map(|m| Cholesky::new(m.clone()).unwrap())
        .collect();
    let a_init = AssetInit {
        variance: 4e-4,
        corr: vec![0.2; k],
        realized_var: 3e-4,
        realized_corr: vec![0.15; k],
    };
    let state = filter_asset(
        asset,
        &r,
        &v,
        &vp,
        &vn,
        &rl,
        Some(&a_init),
        PD_TOL,
        &corr_chols,
        &realized_chols,
    )
    .unwrap();
    let h_ref = oracle_variance(&asset.var_eq, &v, &r, Some(4e-4));
    assert_close(state.variances[t - 1], h_ref[t - 1], "asset h tail");
    assert_close(state.variances[0], 4e-4, "asset h init");
    assert_close(state.correlations[(0, 0)], 0.2f64.atanh().tanh(), "asset rho init");
}
