//! Box-constrained maximization used by every estimation stage.
//!
//! Parameters are mapped to unconstrained space through a logistic
//! transform, explored with Nelder-Mead, then polished with BFGS using
//! central finite-difference gradients. Objectives signal infeasible points
//! by returning `-inf` (NaN is treated the same), and the driver keeps the
//! best point ever evaluated, so the result can never be worse than the
//! best supplied start.
//!
//! Multi-start is deterministic: extra starts are drawn from a ChaCha
//! stream seeded by the caller, and all candidates run sequentially.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HeavyError, Result};

/// Closed interval for one coordinate. The optimizer only proposes points
/// strictly inside.
#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bounds { lo, hi }
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Knobs for the multi-start driver.
#[derive(Debug, Clone)]
pub struct OptimOptions {
    /// Total number of starts (heuristic starts count toward this; the
    /// remainder is drawn at random inside the box).
    pub starts: usize,
    pub seed: u64,
    /// Cap on Nelder-Mead iterations; 0 picks 250 per dimension.
    pub nm_max_iters: usize,
    pub bfgs_max_iters: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            starts: 5,
            seed: 0,
            nm_max_iters: 0,
            bfgs_max_iters: 200,
        }
    }
}

/// Result of a maximization.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// True when the quasi-Newton polish reached its gradient tolerance at
    /// the winning start.
    pub converged: bool,
}

const LOGIT_CLIP: f64 = 1e-9;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-7;
const ARMIJO_C1: f64 = 1e-4;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn to_theta(z: &[f64], bounds: &[Bounds]) -> Vec<f64> {
    z.iter()
        .zip(bounds)
        .map(|(&zi, b)| b.lo + b.width() * sigmoid(zi))
        .collect()
}

fn to_z(theta: &[f64], bounds: &[Bounds]) -> Vec<f64> {
    theta
        .iter()
        .zip(bounds)
        .map(|(&t, b)| {
            let p = ((t - b.lo) / b.width()).clamp(LOGIT_CLIP, 1.0 - LOGIT_CLIP);
            (p / (1.0 - p)).ln()
        })
        .collect()
}

struct Evaluator<'a> {
    f: &'a dyn Fn(&[f64]) -> f64,
    bounds: &'a [Bounds],
    count: usize,
    best_value: f64,
    best_theta: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(f: &'a dyn Fn(&[f64]) -> f64, bounds: &'a [Bounds]) -> Self {
        Evaluator {
            f,
            bounds,
            count: 0,
            best_value: f64::NEG_INFINITY,
            best_theta: Vec::new(),
        }
    }

    /// Evaluates the objective to MINIMIZE (negated caller objective) at a
    /// point in unconstrained space. NaN is mapped to +inf.
    fn eval(&mut self, z: &[f64]) -> f64 {
        let theta = to_theta(z, self.bounds);
        let v = (self.f)(&theta);
        self.count += 1;
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if v > self.best_value {
            self.best_value = v;
            self.best_theta = theta;
        }
        -v
    }
}

/// Maximizes `f` over the box. `heuristic_starts` are evaluated first and
/// always honored: the outcome value is at least the best start value.
/// `label` names the estimation stage in error messages.
pub fn maximize(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[Bounds],
    heuristic_starts: &[Vec<f64>],
    opts: &OptimOptions,
    label: &str,
) -> Result<OptimOutcome> {
    let dim = bounds.len();
    if dim == 0 {
        return Err(HeavyError::InvalidParameter {
            name: "bounds".to_string(),
            message: "empty parameter vector".to_string(),
        });
    }
    for (i, b) in bounds.iter().enumerate() {
        if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
            return Err(HeavyError::InvalidParameter {
                name: format!("bounds[{i}]"),
                message: format!("invalid interval [{}, {}]", b.lo, b.hi),
            });
        }
    }
    for (s, start) in heuristic_starts.iter().enumerate() {
        if start.len() != dim {
            return Err(HeavyError::DimensionMismatch {
                context: format!("start {s} for {label}"),
                expected: format!("{dim}"),
                actual: format!("{}", start.len()),
            });
        }
    }

    let total_starts = opts.starts.max(heuristic_starts.len()).max(1);
    let mut starts: Vec<Vec<f64>> = heuristic_starts.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < total_starts {
        let theta: Vec<f64> = bounds
            .iter()
            .map(|b| b.lo + b.width() * rng.random_range(0.02..0.98))
            .collect();
        starts.push(theta);
    }

    let nm_iters = if opts.nm_max_iters == 0 {
        250 * dim
    } else {
        opts.nm_max_iters
    };

    let mut ev = Evaluator::new(f, bounds);
    let mut feasible_start_found = false;
    let mut winner_converged = false;
    let mut winner_value = f64::NEG_INFINITY;

    for start in &starts {
        let mut z = to_z(start, bounds);
        let mut g0 = ev.eval(&z);
        // Infeasible start: walk toward the box center (z = 0) until the
        // objective becomes finite.
        let mut tries = 0;
        while !g0.is_finite() && tries < 30 {
            for zi in z.iter_mut() {
                *zi *= 0.5;
            }
            g0 = ev.eval(&z);
            tries += 1;
        }
        if !g0.is_finite() {
            continue;
        }
        feasible_start_found = true;

        let z_nm = nelder_mead(&mut ev, &z, nm_iters);
        let (z_bfgs, grad_ok) = bfgs(&mut ev, &z_nm, opts.bfgs_max_iters);
        let final_value = -ev.eval(&z_bfgs);
        if final_value > winner_value {
            winner_value = final_value;
            winner_converged = grad_ok;
        }
    }

    if !feasible_start_found || ev.best_theta.is_empty() {
        return Err(HeavyError::EstimationFailed {
            stage: label.to_string(),
            message: "no start produced a finite objective".to_string(),
        });
    }

    Ok(OptimOutcome {
        theta: ev.best_theta.clone(),
        value: ev.best_value,
        evaluations: ev.count,
        converged: winner_converged,
    })
}

/// Classic Nelder-Mead on the negated objective; returns the best vertex.
fn nelder_mead(ev: &mut Evaluator, z0: &[f64], max_iters: usize) -> Vec<f64> {
    let dim = z0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut values: Vec<f64> = Vec::with_capacity(dim + 1);
    simplex.push(z0.to_vec());
    values.push(ev.eval(z0));
    for i in 0..dim {
        let mut v = z0.to_vec();
        v[i] += 0.5;
        values.push(ev.eval(&v));
        simplex.push(v);
    }

    for _ in 0..max_iters {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = values[worst] - values[best];
        if spread.is_finite() && spread.abs() < 1e-10 * (1.0 + values[best].abs()) {
            let diam = simplex
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[best])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if diam < 1e-9 {
                break;
            }
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; dim];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + (c - w))
            .collect();
        let f_reflect = ev.eval(&reflect);

        if f_reflect < values[best] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let f_expand = ev.eval(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            // Contract toward the better of worst/reflected.
            let (anchor, f_anchor) = if f_reflect < values[worst] {
                (reflect.clone(), f_reflect)
            } else {
                (simplex[worst].clone(), values[worst])
            };
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&anchor)
                .map(|(c, a)| c + 0.5 * (a - c))
                .collect();
            let f_contract = ev.eval(&contract);
            if f_contract < f_anchor {
                simplex[worst] = contract;
                values[worst] = f_contract;
            } else {
                // Shrink toward the best vertex.
                let best_vertex = simplex[best].clone();
                for idx in 0..=dim {
                    if idx == best {
                        continue;
                    }
                    let shrunk: Vec<f64> = best_vertex
                        .iter()
                        .zip(&simplex[idx])
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    values[idx] = ev.eval(&shrunk);
                    simplex[idx] = shrunk;
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    simplex.swap_remove(best)
}

/// BFGS polish on the negated objective. Returns the final point and
/// whether the gradient tolerance was reached. Gradient stencils touching
/// infeasible points abort the polish; the Nelder-Mead point stands.
fn bfgs(ev: &mut Evaluator, z0: &[f64], max_iters: usize) -> (Vec<f64>, bool) {
    let dim = z0.len();
    let mut z = z0.to_vec();
    let mut fz = ev.eval(&z);
    if !fz.is_finite() {
        return (z, false);
    }

    let grad = |ev: &mut Evaluator, z: &[f64]| -> Option<Vec<f64>> {
        let mut g = vec![0.0; z.len()];
        for i in 0..z.len() {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[i] += GRAD_STEP;
            zm[i] -= GRAD_STEP;
            let fp = ev.eval(&zp);
            let fm = ev.eval(&zm);
            if !fp.is_finite() || !fm.is_finite() {
                return None;
            }
            g[i] = (fp - fm) / (2.0 * GRAD_STEP);
        }
        Some(g)
    };

    let mut g = match grad(ev, &z) {
        Some(g) => g,
        None => return (z, false),
    };
    // Inverse Hessian approximation, dense row-major.
    let mut h_inv = vec![0.0; dim * dim];
    for i in 0..dim {
        h_inv[i * dim + i] = 1.0;
    }

    let mut converged = false;
    for _ in 0..max_iters {
        let gnorm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm < GRAD_TOL * (1.0 + fz.abs()) {
            converged = true;
            break;
        }

        // Search direction d = -H_inv * g.
        let mut d = vec![0.0; dim];
        for i in 0..dim {
            let mut s = 0.0;
            for j in 0..dim {
                s += h_inv[i * dim + j] * g[j];
            }
            d[i] = -s;
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // Not a descent direction; reset to steepest descent.
            for i in 0..dim {
                for j in 0..dim {
                    h_inv[i * dim + j] = if i == j { 1.0 } else { 0.0 };
                }
                d[i] = -g[i];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();

        let mut step = 1.0;
        let mut z_new = Vec::new();
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..45 {
            z_new = z.iter().zip(&d).map(|(zi, di)| zi + step * di).collect();
            f_new = ev.eval(&z_new);
            if f_new.is_finite() && f_new <= fz + ARMIJO_C1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }

        let g_new = match grad(ev, &z_new) {
            Some(g) => g,
            None => {
                z = z_new;
                break;
            }
        };
        let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            // BFGS inverse update: H <- (I - rho s y')H(I - rho y s') + rho s s'.
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; dim];
            for i in 0..dim {
                let mut acc = 0.0;
                for j in 0..dim {
                    acc += h_inv[i * dim + j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..dim {
                for j in 0..dim {
                    h_inv[i * dim + j] += rho * rho * yhy * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * s[i] * s[j];
                }
            }
        }

        z = z_new;
        fz = f_new;
        g = g_new;

        let step_size = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if step_size < 1e-12 {
            converged = true;
            break;
        }
    }

    (z, converged)
}
