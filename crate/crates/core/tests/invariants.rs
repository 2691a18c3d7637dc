//! Property tests for the structural invariants of the model: transform
//! round trips, targeting fixed points, positivity and determinism of the
//! filters, feasibility of the joint correlation assembly, optimality of
//! the closed-form portfolio weights, and the parameter-count contract.

use hdheavy::asset_model::{
    clamp_correlation, filter_asset_correlations, fisher, fisher_inv, joint_correlation_q,
    AssetBoxes, AssetModelParams, CorrVecEqParams,
};
use hdheavy::core_model::{
    correlation_intercept, correlation_step, filter_variance_path, positive_signs,
    realized_corr_step, CoreBoxes, CoreModelParams, CorrParams, VarianceEqParams,
};
use hdheavy::eval::gmvp::portfolio_variance;
use hdheavy::eval::{
    euclidean_loss, frobenius_loss, gmvp_weights, gmvp_weights_long_only, model_confidence_set,
    utility_fee, McsOptions,
};
use hdheavy::linalg::{is_pd, vech, PD_TOL};
use hdheavy::simulate::assemble_joint_correlation;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_corr(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
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

fn random_pd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let z = DMatrix::<f64>::from_fn(n + 4, n, |_, _| StandardNormal.sample(rng));
    let mut s = z.transpose() * &z * (scale / (n + 4) as f64);
    for i in 0..n {
        s[(i, i)] += 0.1 * scale;
    }
    s
}

proptest! {
    #[test]
    fn fisher_round_trips_inside_the_open_interval(x in -0.995f64..0.995) {
        let back = fisher_inv(fisher(x));
        prop_assert!((back - x).abs() <= 1e-12);
    }

    #[test]
    fn fisher_clamp_is_idempotent_and_bounded(x in -5.0f64..5.0) {
        let (c, _) = clamp_correlation(x);
        prop_assert!(c.abs() < 1.0);
        let (c2, hit2) = clamp_correlation(c);
        prop_assert_eq!(c, c2);
        prop_assert!(!hit2);
    }

    #[test]
    fn zero_returns_route_to_the_negative_leg(r in -0.05f64..0.05) {
        let signs = positive_signs(&[r, 0.0, -r]);
        prop_assert_eq!(signs[0], r > 0.0);
        prop_assert!(!signs[1]);
    }

    #[test]
    fn variance_filter_stays_positive_and_deterministic(
        seed in 0u64..1000,
        b in 0.0f64..0.95,
        ap in 0.0f64..0.4,
        an in 0.0f64..0.4,
    ) {
        let eq = VarianceEqParams { intercept: 1e-4, arch_pos: ap, arch_neg: an, persistence: b };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 80;
        let v: Vec<f64> = (0..t).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            4e-4 * (0.5 * z).exp()
        }).collect();
        let r: Vec<f64> = (0..t).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.02 * z
        }).collect();
        let signs = positive_signs(&r);
        let h1 = filter_variance_path(&eq, &v, &signs, None).unwrap();
        let h2 = filter_variance_path(&eq, &v, &signs, None).unwrap();
        prop_assert_eq!(h1.clone(), h2);
        prop_assert!(h1.iter().all(|x| x.is_finite() && *x > 0.0));
    }

    #[test]
    fn correlation_targeting_fixed_point_is_exact(
        seed in 0u64..1000,
        alpha in 0.01f64..0.2,
        beta in 0.3f64..0.79,
    ) {
        // When the realized input sits at P_bar and the state at R_bar, one
        // step of the targeted recursion returns R_bar exactly (up to the
        // floating arithmetic of the affine combination).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=4usize);
        let r_bar = random_corr(&mut rng, k);
        let p_bar = random_corr(&mut rng, k);
        let corr = CorrParams { alpha, beta };
        let intercept = correlation_intercept(corr, &r_bar, &p_bar);
        let next = correlation_step(&intercept, corr, &p_bar, &r_bar);
        for i in 0..k {
            for j in 0..k {
                prop_assert!((next[(i, j)] - r_bar[(i, j)]).abs() <= 1e-14);
            }
        }
        let p_next = realized_corr_step(corr, &p_bar, &p_bar, &p_bar);
        for i in 0..k {
            for j in 0..k {
                prop_assert!((p_next[(i, j)] - p_bar[(i, j)]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn asset_correlation_paths_stay_strictly_inside_unit_interval(
        seed in 0u64..1000,
        intercept in -0.3f64..0.3,
        arch in 0.0f64..0.45,
        persistence in 0.0f64..0.5,
    ) {
        let eq = CorrVecEqParams { intercept, arch, persistence };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 60;
        let k = 3;
        let rl = DMatrix::from_fn(t, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (1.5 * z).tanh()
        });
        let (rho, _) = filter_asset_correlations(&eq, &rl, None).unwrap();
        for row in 0..t {
            for j in 0..k {
                prop_assert!(rho[(row, j)].abs() < 1.0);
            }
        }
    }

    #[test]
    fn joint_assembly_is_pd_exactly_when_every_q_is_below_one(
        seed in 0u64..2000,
        scale in 0.1f64..1.4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=3usize);
        let n = rng.random_range(1..=4usize);
        let factor_corr = random_corr(&mut rng, k);
        let rows = DMatrix::from_fn(n, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * (0.7 * z).tanh() / (k as f64).sqrt()
        });
        let idio = DMatrix::identity(n, n);
        let every_q_ok = (0..n).all(|i| {
            let rho = rows.row(i).transpose();
            match joint_correlation_q(&rho, &factor_corr) {
                Some(q) => q < 1.0 - PD_TOL,
                None => false,
            }
        });
        match assemble_joint_correlation(&factor_corr, &rows, &idio, PD_TOL) {
            Ok((joint, qs)) => {
                prop_assert!(every_q_ok);
                prop_assert_eq!(qs.len(), n);
                prop_assert!(is_pd(&joint, 0.0));
                for i in 0..k + n {
                    prop_assert!((joint[(i, i)] - 1.0).abs() < 1e-14);
                }
            }
            Err(_) => prop_assert!(!every_q_ok),
        }
    }

    #[test]
    fn gmvp_weights_beat_random_unit_sum_portfolios(
        seed in 0u64..500,
        n in 2usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_pd(&mut rng, n, 1e-3);
        let w = gmvp_weights(&h).unwrap();
        prop_assert!((w.sum() - 1.0).abs() <= 1e-10);
        let best = portfolio_variance(&h, &w);
        for _ in 0..20 {
            let mut cand = DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let s = cand.sum();
            if s.abs() < 0.1 {
                continue;
            }
            cand /= s;
            prop_assert!(portfolio_variance(&h, &cand) >= best - 1e-14);
        }
        let wl = gmvp_weights_long_only(&h).unwrap();
        prop_assert!((wl.sum() - 1.0).abs() <= 1e-10);
        prop_assert!(wl.iter().all(|x| *x >= -1e-12));
        prop_assert!(portfolio_variance(&h, &wl) >= best - 1e-14);
    }

    #[test]
    fn losses_are_nonnegative_and_zero_only_at_equality(
        seed in 0u64..500,
        n in 2usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_pd(&mut rng, n, 1e-3);
        let b = random_pd(&mut rng, n, 1e-3);
        let ed = euclidean_loss(&a, &b).unwrap();
        let fn_loss = frobenius_loss(&a, &b).unwrap();
        prop_assert!(ed >= 0.0 && fn_loss >= 0.0);
        prop_assert!(euclidean_loss(&a, &a).unwrap() == 0.0);
        prop_assert!(frobenius_loss(&a, &a).unwrap() == 0.0);
        if a != b {
            prop_assert!(fn_loss > 0.0);
        }
    }

    #[test]
    fn parameter_records_follow_the_counting_formula(
        k in 1usize..6,
        n in 1usize..8,
    ) {
        let core = CoreModelParams {
            var_eq: vec![VarianceEqParams { intercept: 1e-4, arch_pos: 0.2, arch_neg: 0.3, persistence: 0.5 }; k],
            corr: CorrParams { alpha: 0.1, beta: 0.8 },
            realized_var_eq: vec![VarianceEqParams { intercept: 1e-4, arch_pos: 0.2, arch_neg: 0.3, persistence: 0.5 }; k],
            realized_corr: CorrParams { alpha: 0.1, beta: 0.8 },
            corr_target: DMatrix::identity(k, k),
            realized_corr_target: DMatrix::identity(k, k),
        };
        let names: Vec<String> = (0..k).map(|j| format!("f{j}")).collect();
        let records = core.param_records(&names, &CoreBoxes::defaults(k));
        prop_assert_eq!(records.len(), 8 * k + 4);

        let asset = AssetModelParams {
            var_eq: VarianceEqParams { intercept: 1e-4, arch_pos: 0.2, arch_neg: 0.3, persistence: 0.5 },
            corr_eq: CorrVecEqParams { intercept: 0.02, arch: 0.1, persistence: 0.7 },
            realized_var_eq: VarianceEqParams { intercept: 1e-4, arch_pos: 0.2, arch_neg: 0.3, persistence: 0.5 },
            realized_corr_eq: CorrVecEqParams { intercept: 0.02, arch: 0.1, persistence: 0.7 },
        };
        let mut total = records.len();
        for i in 0..n {
            total += asset.param_records(&format!("a{i}"), &AssetBoxes::defaults()).len();
        }
        prop_assert_eq!(total, 8 * k + 4 + 14 * n);
    }

    #[test]
    fn vech_stacks_the_lower_triangle(n in 1usize..7) {
        let a = DMatrix::from_fn(n, n, |i, j| (i * n + j) as f64);
        let sym = (&a + a.transpose()) * 0.5;
        let v = vech(&sym);
        prop_assert_eq!(v.len(), n * (n + 1) / 2);
        prop_assert_eq!(v[0], sym[(0, 0)]);
        prop_assert_eq!(v[v.len() - 1], sym[(n - 1, n - 1)]);
    }

    #[test]
    fn utility_fee_is_zero_for_identical_tracks_and_signs_with_the_gap(
        seed in 0u64..500,
        gamma in 0.5f64..12.0,
        shift in 1e-4f64..5e-3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..90).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * z
        }).collect();
        prop_assert_eq!(utility_fee(&base, &base, gamma).unwrap(), 0.0);
        let better: Vec<f64> = base.iter().map(|r| r + shift).collect();
        let fee = utility_fee(&base, &better, gamma).unwrap();
        prop_assert!(fee > 0.0);
        let fee_rev = utility_fee(&better, &base, gamma).unwrap();
        prop_assert!(fee_rev < 0.0);
    }
}

#[test]
fn mcs_p_values_are_probabilities_with_a_unit_survivor() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let t = 150;
    let m = 4;
    let losses = DMatrix::from_fn(t, m, |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        1.0 + 0.3 * j as f64 + 0.5 * z
    });
    let res = model_confidence_set(
        &losses,
        &McsOptions {
            block_length: 4,
            bootstrap: 500,
            seed: 7,
        },
    )
    .unwrap();
    assert_eq!(res.p_values.len(), m);
    assert!(res.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
    let survivor = *res.elimination_order.last().unwrap();
    assert_eq!(res.p_values[survivor], 1.0);
    assert_eq!(res.members(0.0).len(), m);
    assert_eq!(res.elimination_order.len(), m);
    // p-values are monotone along the elimination order.
    for pair in res.elimination_order.windows(2) {
        assert!(res.p_values[pair[0]] <= res.p_values[pair[1]] + 1e-15);
    }
}
