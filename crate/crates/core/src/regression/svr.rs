//! ε-insensitive support vector regression with an RBF kernel, solved by
//! sequential minimal optimization on the 2n-variable dual.
//!
//! The dual is `min ½αᵀQα + pᵀα` over `0 ≤ α ≤ C` with `zᵀα = 0`, where
//! the first n entries are the up-slack multipliers (z = +1,
//! p = ε − y) and the last n the down-slack multipliers (z = −1,
//! p = ε + y). Working pairs are chosen by maximal violation; the bias
//! comes from the free multipliers' KKT conditions.

use super::RegressionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    /// RBF width; None uses 1/(d·var) of the training features.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig { c: 10.0, epsilon: 0.01, gamma: None, tol: 1e-4, max_iter: 2_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct Svr {
    support: Vec<Vec<f64>>,
    /// β_i = α⁺_i − α⁻_i for support rows.
    beta: Vec<f64>,
    bias: f64,
    gamma: f64,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

/// Variance-scaled default width 1/(d·var), over all feature entries.
pub fn gamma_scale(x: &[f64], d: usize) -> f64 {
    let var = crate::stats::sample_var(x);
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

impl Svr {
    pub fn fit(
        x: &[f64],
        n: usize,
        d: usize,
        y: &[f64],
        cfg: &SvrConfig,
    ) -> Result<Svr, RegressionError> {
        let gamma = cfg.gamma.unwrap_or_else(|| gamma_scale(x, d));
        let rows: Vec<&[f64]> = (0..n).map(|i| &x[i * d..(i + 1) * d]).collect();
        // full kernel cache; training sets here are a few hundred rows
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = rbf(rows[i], rows[j], gamma);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        let q = |s: usize, t: usize| -> f64 {
            let sign = if (s < n) == (t < n) { 1.0 } else { -1.0 };
            sign * kernel[(s % n) * n + (t % n)]
        };
        let z = |s: usize| -> f64 {
            if s < n {
                1.0
            } else {
                -1.0
            }
        };
        let p = |s: usize| -> f64 {
            if s < n {
                cfg.epsilon - y[s]
            } else {
                cfg.epsilon + y[s - n]
            }
        };

        let m2 = 2 * n;
        let mut alpha = vec![0.0; m2];
        let mut grad: Vec<f64> = (0..m2).map(p).collect();

        let mut iterations = 0usize;
        loop {
            // maximal violating pair over -z·grad
            let mut up_best = f64::NEG_INFINITY;
            let mut up_idx = None;
            let mut low_best = f64::INFINITY;
            let mut low_idx = None;
            for s in 0..m2 {
                let v = -z(s) * grad[s];
                let in_up = (z(s) > 0.0 && alpha[s] < cfg.c) || (z(s) < 0.0 && alpha[s] > 0.0);
                let in_low = (z(s) > 0.0 && alpha[s] > 0.0) || (z(s) < 0.0 && alpha[s] < cfg.c);
                if in_up && v > up_best {
                    up_best = v;
                    up_idx = Some(s);
                }
                if in_low && v < low_best {
                    low_best = v;
                    low_idx = Some(s);
                }
            }
            let gap = up_best - low_best;
            if gap < cfg.tol {
                break;
            }
            let (Some(i), Some(j)) = (up_idx, low_idx) else { break };
            if iterations >= cfg.max_iter {
                return Err(RegressionError::NoConvergence {
                    what: "SVR SMO",
                    detail: format!("KKT violation {gap:.3e} after {iterations} pair updates"),
                });
            }
            iterations += 1;

            let old_i = alpha[i];
            let old_j = alpha[j];
            let zi = z(i);
            let zj = z(j);
            let mut quad = q(i, i) + q(j, j) - 2.0 * zi * zj * q(i, j);
            if quad <= 0.0 {
                quad = 1e-12;
            }
            if zi != zj {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > cfg.c {
                        alpha[i] = cfg.c;
                        alpha[j] = cfg.c - diff;
                    }
                } else if alpha[j] > cfg.c {
                    alpha[j] = cfg.c;
                    alpha[i] = cfg.c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > cfg.c {
                    if alpha[i] > cfg.c {
                        alpha[i] = cfg.c;
                        alpha[j] = sum - cfg.c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > cfg.c {
                    if alpha[j] > cfg.c {
                        alpha[j] = cfg.c;
                        alpha[i] = sum - cfg.c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }

            let di = alpha[i] - old_i;
            let dj = alpha[j] - old_j;
            if di != 0.0 || dj != 0.0 {
                for s in 0..m2 {
                    grad[s] += q(s, i) * di + q(s, j) * dj;
                }
            }
        }

        // bias from free multipliers; fall back to the violation midpoint
        let mut free_sum = 0.0;
        let mut free_count = 0;
        for s in 0..m2 {
            if alpha[s] > 1e-12 && alpha[s] < cfg.c - 1e-12 {
                free_sum += -z(s) * grad[s];
                free_count += 1;
            }
        }
        let bias = if free_count > 0 {
            free_sum / free_count as f64
        } else {
            let mut up_best = f64::NEG_INFINITY;
            let mut low_best = f64::INFINITY;
            for s in 0..m2 {
                let v = -z(s) * grad[s];
                let in_up = (z(s) > 0.0 && alpha[s] < cfg.c) || (z(s) < 0.0 && alpha[s] > 0.0);
                let in_low = (z(s) > 0.0 && alpha[s] > 0.0) || (z(s) < 0.0 && alpha[s] < cfg.c);
                if in_up {
                    up_best = up_best.max(v);
                }
                if in_low {
                    low_best = low_best.min(v);
                }
            }
            0.5 * (up_best + low_best)
        };

        let mut support = Vec::new();
        let mut beta = Vec::new();
        for i in 0..n {
            let b = alpha[i] - alpha[i + n];
            if b.abs() > 1e-12 {
                support.push(rows[i].to_vec());
                beta.push(b);
            }
        }
        Ok(Svr { support, beta, bias, gamma })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .support
                .iter()
                .zip(&self.beta)
                .map(|(sv, b)| b * rbf(sv, row, self.gamma))
                .sum::<f64>()
    }
}
