//! Model confidence set over loss series.
//!
//! Given per-month losses for M models, the procedure repeatedly tests the
//! null of equal predictive ability with the range statistic
//!
//!   T_R = max_{i,j in S} | dbar_ij | / se(dbar_ij),   dbar_ij = mean(L_i - L_j)
//!
//! using a circular block bootstrap for the null distribution (centered at
//! the sample means) and eliminates the worst model until the null is no
//! longer rejected. Reported p-values are monotonized along the elimination
//! order; the final survivor gets 1. The bootstrap index panel is drawn
//! once and shared across elimination rounds, with one independent RNG
//! stream per replicate so results do not depend on thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HeavyError, Result};

#[derive(Debug, Clone)]
pub struct McsOptions {
    /// Circular block length.
    pub block_length: usize,
    /// Number of bootstrap replicates.
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for McsOptions {
    fn default() -> Self {
        McsOptions {
            block_length: 4,
            bootstrap: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McsResult {
    /// Monotonized p-value per model, aligned with the input columns.
    pub p_values: Vec<f64>,
    /// Model indices from first eliminated to final survivor.
    pub elimination_order: Vec<usize>,
}

impl McsResult {
    /// Models retained in the (1 - alpha) confidence set.
    pub fn members(&self, alpha: f64) -> Vec<usize> {
        (0..self.p_values.len())
            .filter(|&i| self.p_values[i] >= alpha)
            .collect()
    }
}

/// Studentized statistic with the zero-variance convention: a zero
/// standard error gives 0 when the numerator is zero and +/- infinity
/// otherwise.
fn studentize(num: f64, se: f64) -> f64 {
    if se > 0.0 {
        num / se
    } else if num == 0.0 {
        0.0
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Bootstrap means of every model's loss under one shared circular block
/// index draw per replicate; rows = replicates, columns = models.
fn bootstrap_means(losses: &DMatrix<f64>, opts: &McsOptions) -> DMatrix<f64> {
    let t = losses.nrows();
    let m = losses.ncols();
    let block = opts.block_length.clamp(1, t);
    let rows: Vec<Vec<f64>> = (0..opts.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64 + 1);
            let mut sums = vec![0.0; m];
            let mut filled = 0usize;
            while filled < t {
                let start = rng.random_range(0..t);
                for offset in 0..block {
                    if filled == t {
                        break;
                    }
                    let row = (start + offset) % t;
                    for j in 0..m {
                        sums[j] += losses[(row, j)];
                    }
                    filled += 1;
                }
            }
            for s in sums.iter_mut() {
                *s /= t as f64;
            }
            sums
        })
        .collect();
    let mut out = DMatrix::zeros(opts.bootstrap, m);
    for (b, row) in rows.iter().enumerate() {
        for j in 0..m {
            out[(b, j)] = row[j];
        }
    }
    out
}

/// Runs the elimination procedure. `losses` is T x M (months by models).
pub fn model_confidence_set(losses: &DMatrix<f64>, opts: &McsOptions) -> Result<McsResult> {
    let t = losses.nrows();
    let m = losses.ncols();
    if m == 0 || t < 2 {
        return Err(HeavyError::DimensionMismatch {
            context: "model confidence set".to_string(),
            expected: "at least one model and two months".to_string(),
            actual: format!("{t} x {m}"),
        });
    }
    if losses.iter().any(|x| !x.is_finite()) {
        return Err(HeavyError::DataQuality(
            "loss series contain non-finite entries".to_string(),
        ));
    }
    if opts.bootstrap == 0 {
        return Err(HeavyError::Config(
            "bootstrap replicate count must be positive".to_string(),
        ));
    }
    if m == 1 {
        return Ok(McsResult {
            p_values: vec![1.0],
            elimination_order: vec![0],
        });
    }

    let sample_means: Vec<f64> = (0..m).map(|j| losses.column(j).sum() / t as f64).collect();
    let boot = bootstrap_means(losses, opts);
    let b_count = opts.bootstrap;

    // Bootstrap standard errors of every pairwise mean difference; shared
    // across elimination rounds.
    let mut se = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let d_hat = sample_means[i] - sample_means[j];
            let mut acc = 0.0;
            for b in 0..b_count {
                let z = (boot[(b, i)] - boot[(b, j)]) - d_hat;
                acc += z * z;
            }
            let s = (acc / b_count as f64).sqrt();
            se[(i, j)] = s;
            se[(j, i)] = s;
        }
    }

    let mut surviving: Vec<usize> = (0..m).collect();
    let mut p_values = vec![1.0; m];
    let mut elimination_order = Vec::with_capacity(m);
    let mut running_max = 0.0f64;

    while surviving.len() > 1 {
        // Observed range statistic and the worst model.
        let mut t_range = 0.0f64;
        let mut worst = surviving[0];
        let mut worst_stat = f64::NEG_INFINITY;
        for &i in &surviving {
            let mut max_over_j = f64::NEG_INFINITY;
            for &j in &surviving {
                if i == j {
                    continue;
                }
                let stat = studentize(sample_means[i] - sample_means[j], se[(i, j)]);
                if stat > max_over_j {
                    max_over_j = stat;
                }
                if stat.abs() > t_range {
                    t_range = stat.abs();
                }
            }
            if max_over_j > worst_stat {
                worst_stat = max_over_j;
                worst = i;
            }
        }

        // Bootstrap null distribution of the range statistic.
        let mut exceed = 0usize;
        for b in 0..b_count {
            let mut t_star = 0.0f64;
            for (a, &i) in surviving.iter().enumerate() {
                for &j in surviving.iter().skip(a + 1) {
                    let centered =
                        (boot[(b, i)] - boot[(b, j)]) - (sample_means[i] - sample_means[j]);
                    let stat = studentize(centered, se[(i, j)]).abs();
                    if stat > t_star {
                        t_star = stat;
                    }
                }
            }
            if t_star >= t_range {
                exceed += 1;
            }
        }
        let p_raw = exceed as f64 / b_count as f64;
        running_max = running_max.max(p_raw);
        p_values[worst] = running_max;
        elimination_order.push(worst);
        surviving.retain(|&i| i != worst);
    }

    let last = surviving[0];
    p_values[last] = 1.0;
    elimination_order.push(last);

    Ok(McsResult {
        p_values,
        elimination_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn opts(b: usize, seed: u64) -> McsOptions {
        McsOptions {
            block_length: 4,
            bootstrap: b,
            seed,
        }
    }

    #[test]
    fn identical_losses_keep_every_model_with_p_one() {
        let base: Vec<f64> = (0..50).map(|t| 1.0 + (t as f64 * 0.7).sin().abs()).collect();
        let mut losses = DMatrix::zeros(50, 3);
        for t in 0..50 {
            for j in 0..3 {
                losses[(t, j)] = base[t];
            }
        }
        let result = model_confidence_set(&losses, &opts(400, 7)).unwrap();
        assert_eq!(result.p_values, vec![1.0, 1.0, 1.0]);
        assert_eq!(result.members(0.10), vec![0, 1, 2]);
    }

    #[test]
    fn dominated_model_is_eliminated_with_tiny_p_value() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let t = 150;
        let mut losses = DMatrix::zeros(t, 3);
        for row in 0..t {
            let base: f64 = StandardNormal.sample(&mut rng);
            losses[(row, 0)] = 1.0 + 0.1 * base;
            let e1: f64 = StandardNormal.sample(&mut rng);
            losses[(row, 1)] = 1.0 + 0.1 * e1;
            let e2: f64 = StandardNormal.sample(&mut rng);
            // Five standard deviations worse.
            losses[(row, 2)] = 1.5 + 0.1 * e2;
        }
        let result = model_confidence_set(&losses, &opts(800, 3)).unwrap();
        assert_eq!(result.elimination_order[0], 2);
        assert!(result.p_values[2] < 0.01, "p = {}", result.p_values[2]);
        assert!(result.p_values[0] > 0.10);
        assert!(result.p_values[1] > 0.10);
    }

    #[test]
    fn p_values_are_monotone_along_elimination_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let t = 120;
        let mut losses = DMatrix::zeros(t, 4);
        for row in 0..t {
            for j in 0..4 {
                let e: f64 = StandardNormal.sample(&mut rng);
                losses[(row, j)] = 1.0 + 0.05 * j as f64 + 0.2 * e;
            }
        }
        let result = model_confidence_set(&losses, &opts(400, 5)).unwrap();
        let ordered: Vec<f64> = result
            .elimination_order
            .iter()
            .map(|&i| result.p_values[i])
            .collect();
        for w in ordered.windows(2) {
            assert!(w[0] <= w[1] + 1e-15, "non-monotone {ordered:?}");
        }
        assert_eq!(*ordered.last().unwrap(), 1.0);
    }

    #[test]
    fn same_seed_reproduces_identical_results() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let t = 90;
        let mut losses = DMatrix::zeros(t, 3);
        for row in 0..t {
            for j in 0..3 {
                let e: f64 = StandardNormal.sample(&mut rng);
                losses[(row, j)] = 1.0 + 0.1 * j as f64 * e.abs() + 0.3 * e;
            }
        }
        let a = model_confidence_set(&losses, &opts(300, 77)).unwrap();
        let b = model_confidence_set(&losses, &opts(300, 77)).unwrap();
        assert_eq!(a.p_values, b.p_values);
        assert_eq!(a.elimination_order, b.elimination_order);
    }

    #[test]
    fn single_model_is_trivially_retained() {
        let losses = DMatrix::from_column_slice(10, 1, &[1.0; 10]);
        let result = model_confidence_set(&losses, &opts(100, 1)).unwrap();
        assert_eq!(result.p_values, vec![1.0]);
    }
}
