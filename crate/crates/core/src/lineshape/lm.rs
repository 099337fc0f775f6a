//! Damped least-squares (Levenberg–Marquardt) with box constraints.
//!
//! Steps solve `(JᵀJ + λ·diag(JᵀJ))·δ = Jᵀr` and are projected onto the
//! bounds before evaluation; λ adapts on accept/reject. Convergence is
//! declared on a relative cost decrease below `cost_tol`, a small gradient,
//! or a small step.

use super::model::Model;
use crate::stats::cholesky_solve;

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iter: usize,
    pub cost_tol: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 600, cost_tol: 1e-11, grad_tol: 1e-10, step_tol: 1e-11 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `Σ (y_i − f(x_i; p))²` starting from `p0`, optionally keeping
/// every parameter inside `[lower, upper]`.
pub fn lm_fit(
    model: Model,
    x: &[f64],
    y: &[f64],
    p0: &[f64],
    bounds: Option<(&[f64], &[f64])>,
    opts: &LmOptions,
) -> LmOutcome {
    let n = model.n_params();
    debug_assert_eq!(p0.len(), n);
    let m = x.len();

    let clamp = |p: &mut [f64]| {
        if let Some((lo, hi)) = bounds {
            for j in 0..n {
                p[j] = p[j].clamp(lo[j], hi[j]);
            }
        }
    };

    let mut p = p0.to_vec();
    clamp(&mut p);

    let cost_of = |p: &[f64]| -> f64 {
        x.iter().zip(y).map(|(&xi, &yi)| {
            let r = yi - model.eval(p, xi);
            r * r
        }).sum()
    };

    let mut cost = cost_of(&p);
    let mut lambda = 1e-3;
    let mut jrow = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;

        // accumulate JᵀJ and Jᵀr
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            model.jacobian_row(&p, x[i], &mut jrow);
            let r = y[i] - model.eval(&p, x[i]);
            for a in 0..n {
                jtr[a] += jrow[a] * r;
                for b in a..n {
                    jtj[a * n + b] += jrow[a] * jrow[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[a * n + b] = jtj[b * n + a];
            }
        }

        // active set: parameters pinned at a bound with the gradient
        // pointing outward take no part in the step
        let free: Vec<usize> = (0..n)
            .filter(|&j| {
                let Some((lo, hi)) = bounds else { return true };
                let scale = hi[j].abs().max(lo[j].abs()).max(1e-300);
                let at_lo = p[j] - lo[j] <= 1e-14 * scale;
                let at_hi = hi[j] - p[j] <= 1e-14 * scale;
                !(at_lo && jtr[j] < 0.0 || at_hi && jtr[j] > 0.0)
            })
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }

        let grad_norm = free.iter().map(|&j| jtr[j] * jtr[j]).sum::<f64>().sqrt();
        if grad_norm < opts.grad_tol * (1.0 + cost) {
            converged = true;
            break;
        }

        let nf = free.len();
        let mut jtj_f = vec![0.0; nf * nf];
        let mut jtr_f = vec![0.0; nf];
        for (a, &ja) in free.iter().enumerate() {
            jtr_f[a] = jtr[ja];
            for (b, &jb) in free.iter().enumerate() {
                jtj_f[a * nf + b] = jtj[ja * n + jb];
            }
        }

        // try damped steps, inflating lambda on rejection
        let mut accepted = false;
        for _ in 0..16 {
            let mut damped = jtj_f.clone();
            for a in 0..nf {
                let d = damped[a * nf + a];
                damped[a * nf + a] = d + lambda * d.max(1e-12);
            }
            let Some(step_f) = cholesky_solve(&damped, &jtr_f, nf) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = p.clone();
            for (a, &j) in free.iter().enumerate() {
                cand[j] += step_f[a];
            }
            clamp(&mut cand);
            let cand_cost = cost_of(&cand);
            if cand_cost.is_finite() && cand_cost < cost {
                let step_norm = cand
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_drop = (cost - cand_cost) / cost.max(1e-300);
                p = cand;
                cost = cand_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel_drop < opts.cost_tol || step_norm < opts.step_tol * (1.0 + p_norm) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }

        if !accepted {
            // no downhill damped step exists; treat the current point as final
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    LmOutcome { params: p, cost, iterations, converged }
}
