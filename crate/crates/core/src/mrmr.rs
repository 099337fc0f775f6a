//! Mutual-information relevance/redundancy and greedy mRMR (MID) ranking.
//!
//! Mutual information is estimated with a plug-in histogram over
//! equal-frequency (quantile) bins, which makes every quantity invariant
//! under strictly monotone transforms of any column and keeps the whole
//! module deterministic. Ranking uses the difference criterion: each pick
//! maximizes relevance minus mean redundancy against the already-selected
//! set, ties broken toward the lower column index.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MrmrError {
    #[error("bin count must be at least 2, got {0}")]
    BadBins(usize),
    #[error("need at least {min} samples for {bins} bins, got {got}")]
    TooFewSamples { got: usize, min: usize, bins: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("k must lie in 1..={d}, got {k}")]
    BadK { k: usize, d: usize },
}

/// Estimator settings. MI is reported in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiConfig {
    pub bins: usize,
}

impl Default for MiConfig {
    fn default() -> Self {
        MiConfig { bins: 8 }
    }
}

/// Greedy ranking output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankResult {
    /// Column indices in selection order.
    pub order: Vec<usize>,
    /// Incremental criterion value at each pick (relevance for the first).
    pub scores: Vec<f64>,
    /// I(x_i; y) per column.
    pub relevance: Vec<f64>,
}

/// Equal-frequency bin assignment: rank-order the values and cut into
/// `bins` groups of (near-)equal size. Ties are broken by original index,
/// so the assignment is deterministic. Constant input returns None.
fn quantile_bins(values: &[f64], bins: usize) -> Option<Vec<usize>> {
    let n = values.len();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut assignment = vec![0usize; n];
    for (rank, &idx) in order.iter().enumerate() {
        assignment[idx] = rank * bins / n;
    }
    Some(assignment)
}

fn validate(x: &[f64], y: &[f64], cfg: &MiConfig) -> Result<(), MrmrError> {
    if cfg.bins < 2 {
        return Err(MrmrError::BadBins(cfg.bins));
    }
    if x.len() != y.len() {
        return Err(MrmrError::LengthMismatch(x.len(), y.len()));
    }
    let min = 4 * cfg.bins;
    if x.len() < min {
        return Err(MrmrError::TooFewSamples { got: x.len(), min, bins: cfg.bins });
    }
    Ok(())
}

fn mi_from_bins(bx: &[usize], by: &[usize], bins: usize) -> f64 {
    let n = bx.len() as f64;
    let mut joint = vec![0.0f64; bins * bins];
    let mut px = vec![0.0f64; bins];
    let mut py = vec![0.0f64; bins];
    for (&a, &b) in bx.iter().zip(by) {
        joint[a * bins + b] += 1.0;
        px[a] += 1.0;
        py[b] += 1.0;
    }
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let pj = joint[a * bins + b] / n;
            if pj > 0.0 {
                mi += pj * (pj / ((px[a] / n) * (py[b] / n))).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Plug-in mutual information between two samples, in bits.
/// Constant input gives 0 by convention.
pub fn mutual_information(x: &[f64], y: &[f64], cfg: &MiConfig) -> Result<f64, MrmrError> {
    validate(x, y, cfg)?;
    let (Some(bx), Some(by)) = (quantile_bins(x, cfg.bins), quantile_bins(y, cfg.bins)) else {
        return Ok(0.0);
    };
    Ok(mi_from_bins(&bx, &by, cfg.bins))
}

/// Relevance vector `I(x_i; y)` and symmetric redundancy matrix
/// `I(x_i; x_j)` (row-major d×d, diagonal = marginal entropy of the binned
/// column).
pub fn relevance_and_redundancy(
    x: &[f64],
    n: usize,
    d: usize,
    y: &[f64],
    cfg: &MiConfig,
) -> Result<(Vec<f64>, Vec<f64>), MrmrError> {
    if y.len() != n {
        return Err(MrmrError::LengthMismatch(n, y.len()));
    }
    validate(y, y, cfg)?;
    let col_bins: Vec<Option<Vec<usize>>> = (0..d)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| x[i * d + j]).collect();
            quantile_bins(&col, cfg.bins)
        })
        .collect();
    let y_bins = quantile_bins(y, cfg.bins);

    let relevance: Vec<f64> = col_bins
        .par_iter()
        .map(|bj| match (bj, &y_bins) {
            (Some(bj), Some(by)) => mi_from_bins(bj, by, cfg.bins),
            _ => 0.0,
        })
        .collect();

    let pairs: Vec<(usize, usize)> =
        (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| match (&col_bins[a], &col_bins[b]) {
            (Some(ba), Some(bb)) => mi_from_bins(ba, bb, cfg.bins),
            _ => 0.0,
        })
        .collect();
    let mut redundancy = vec![0.0; d * d];
    for (&(a, b), &v) in pairs.iter().zip(&entries) {
        redundancy[a * d + b] = v;
        redundancy[b * d + a] = v;
    }
    Ok((relevance, redundancy))
}

/// Greedy mRMR difference ranking of the top `k` columns.
pub fn mrmr_rank(
    x: &[f64],
    n: usize,
    d: usize,
    y: &[f64],
    k: usize,
    cfg: &MiConfig,
) -> Result<RankResult, MrmrError> {
    if k == 0 || k > d {
        return Err(MrmrError::BadK { k, d });
    }
    let (relevance, redundancy) = relevance_and_redundancy(x, n, d, y, cfg)?;
    let mut order = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    let mut selected = vec![false; d];
    let mut redundancy_sum = vec![0.0; d];

    for step in 0..k {
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..d {
            if selected[j] {
                continue;
            }
            let score = if step == 0 {
                relevance[j]
            } else {
                relevance[j] - redundancy_sum[j] / step as f64
            };
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        let pick = best.expect("unselected column remains");
        selected[pick] = true;
        order.push(pick);
        scores.push(best_score);
        for j in 0..d {
            if !selected[j] {
                redundancy_sum[j] += redundancy[pick * d + j];
            }
        }
    }
    Ok(RankResult { order, scores, relevance })
}

/// Pearson correlation matrix (row-major d×d) plus the indices of constant
/// columns, whose correlations are set to 0 by convention (diagonal 1).
pub fn pearson_matrix(x: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<usize>) {
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += x[i * d + j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for j in 0..d {
            let v = x[i * d + j];
            let c = v - mean[j];
            var[j] += c * c;
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    for j in 0..d {
        if hi[j] <= lo[j] {
            var[j] = 0.0;
        }
    }
    let constant: Vec<usize> = (0..d).filter(|&j| var[j] <= 0.0).collect();
    let mut rho = vec![0.0; d * d];
    for a in 0..d {
        rho[a * d + a] = 1.0;
        for b in a + 1..d {
            if var[a] <= 0.0 || var[b] <= 0.0 {
                continue;
            }
            let mut cov = 0.0;
            for i in 0..n {
                cov += (x[i * d + a] - mean[a]) * (x[i * d + b] - mean[b]);
            }
            let r = cov / (var[a].sqrt() * var[b].sqrt());
            rho[a * d + b] = r;
            rho[b * d + a] = r;
        }
    }
    (rho, constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cfg() -> MiConfig {
        MiConfig::default()
    }

    #[test]
    fn self_information_is_exactly_three_bits_at_8_bins() {
        // distinct continuous values, N divisible by 8
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1024).map(|_| rng.gen::<f64>()).collect();
        let mi = mutual_information(&x, &x, &cfg()).unwrap();
        assert!((mi - 3.0).abs() < 1e-12, "I(X;X) = {mi}");
    }

    #[test]
    fn independent_samples_have_near_zero_mi() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mi = mutual_information(&x, &y, &cfg()).unwrap();
            assert!(mi <= 0.02, "seed {seed}: MI = {mi}");
        }
    }

    #[test]
    fn mi_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + 0.1 * rng.gen::<f64>()).collect();
        let a = mutual_information(&x, &y, &cfg()).unwrap();
        let b = mutual_information(&y, &x, &cfg()).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a >= 0.0);
    }

    #[test]
    fn constant_input_gives_zero_by_convention() {
        let x = vec![5.0; 100];
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(mutual_information(&x, &y, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(
            mutual_information(&x, &x, &cfg()),
            Err(MrmrError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn redundancy_matrix_symmetric_with_entropy_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4096;
        let d = 4;
        let mut x = vec![0.0; n * d];
        for i in 0..n {
            let base: f64 = rng.sample(StandardNormal);
            x[i * d] = base;
            x[i * d + 1] = base; // duplicated column
            x[i * d + 2] = rng.sample(StandardNormal);
            x[i * d + 3] = rng.sample(StandardNormal);
        }
        let y: Vec<f64> = (0..n).map(|i| x[i * d] + 0.1).collect();
        let (_, red) = relevance_and_redundancy(&x, n, d, &y, &cfg()).unwrap();
        for a in 0..d {
            for b in 0..d {
                assert!((red[a * d + b] - red[b * d + a]).abs() < 1e-12);
            }
            assert!((red[a * d + a] - 3.0).abs() < 1e-9, "diagonal is H = 3 bits");
        }
        // duplicated pair carries full entropy
        assert!((red[1] - 3.0).abs() < 1e-9);
        // independent columns nearly zero
        assert!(red[2 * d + 3] < 0.05);
    }

    #[test]
    fn toy_ranking_prefers_generator_then_weak_then_copy() {
        // X1 generates Y, X2 copies X1, X3 is a weaker independent predictor
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2000;
        let d = 3;
        let mut x = vec![0.0; n * d];
        let mut y = vec![0.0; n];
        for i in 0..n {
            let x1: f64 = rng.sample(StandardNormal);
            let x3: f64 = rng.sample(StandardNormal);
            x[i * d] = x1;
            x[i * d + 1] = x1;
            x[i * d + 2] = x3;
            y[i] = x1 + 0.25 * x3;
        }
        let rank = mrmr_rank(&x, n, d, &y, 3, &cfg()).unwrap();
        assert_eq!(rank.order, vec![0, 2, 1]);
        assert!(rank.relevance[0] >= rank.relevance[2]);
    }

    #[test]
    fn k_equals_one_returns_max_relevance_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 600;
        let d = 5;
        let mut x = vec![0.0; n * d];
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..d {
                x[i * d + j] = rng.sample(StandardNormal);
            }
            y[i] = x[i * d + 3];
        }
        let rank = mrmr_rank(&x, n, d, &y, 1, &cfg()).unwrap();
        assert_eq!(rank.order, vec![3]);
        assert_eq!(rank.scores.len(), 1);
    }

    /// Independent oracle MI: rank-based equal-frequency binning written
    /// separately, marginals recomputed from the joint table, natural-log
    /// accumulation converted to bits at the end.
    fn naive_mi(x: &[f64], y: &[f64], bins: usize) -> f64 {
        let n = x.len();
        let assign = |v: &[f64]| -> Vec<usize> {
            let mut s: Vec<usize> = (0..n).collect();
            s.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
            let mut out = vec![0; n];
            for (rank, &idx) in s.iter().enumerate() {
                out[idx] = (rank * bins) / n;
            }
            out
        };
        let bx = assign(x);
        let by = assign(y);
        let mut joint = vec![0usize; bins * bins];
        for i in 0..n {
            joint[bx[i] * bins + by[i]] += 1;
        }
        let mut nats = 0.0;
        for a in 0..bins {
            for b in 0..bins {
                let c = joint[a * bins + b];
                if c == 0 {
                    continue;
                }
                let pj = c as f64 / n as f64;
                let pa = (0..bins).map(|bb| joint[a * bins + bb]).sum::<usize>() as f64 / n as f64;
                let pb = (0..bins).map(|aa| joint[aa * bins + b]).sum::<usize>() as f64 / n as f64;
                nats += pj * (pj / (pa * pb)).ln();
            }
        }
        nats / std::f64::consts::LN_2
    }

    #[test]
    fn greedy_matches_brute_force_incremental_criterion() {
        let bins = 8;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 256;
            let d = 6;
            let mut x = vec![0.0; n * d];
            let mut y = vec![0.0; n];
            for i in 0..n {
                for j in 0..d {
                    x[i * d + j] = rng.sample(StandardNormal);
                }
                y[i] = 0.8 * x[i * d] + 0.4 * x[i * d + 1] * x[i * d + 1]
                    + 0.2 * rng.sample::<f64, _>(StandardNormal);
            }
            let rank = mrmr_rank(&x, n, d, &y, d, &MiConfig { bins }).unwrap();

            // oracle: exhaustive incremental greedy over naive MI values
            let col = |j: usize| -> Vec<f64> { (0..n).map(|i| x[i * d + j]).collect() };
            let rel: Vec<f64> = (0..d).map(|j| naive_mi(&col(j), &y, bins)).collect();
            let mut red = vec![0.0; d * d];
            for a in 0..d {
                for b in 0..d {
                    red[a * d + b] = naive_mi(&col(a), &col(b), bins);
                }
            }
            let mut chosen: Vec<usize> = Vec::new();
            for _ in 0..d {
                let mut best = usize::MAX;
                let mut best_score = f64::NEG_INFINITY;
                for j in 0..d {
                    if chosen.contains(&j) {
                        continue;
                    }
                    let score = if chosen.is_empty() {
                        rel[j]
                    } else {
                        rel[j]
                            - chosen.iter().map(|&s| red[j * d + s]).sum::<f64>()
                                / chosen.len() as f64
                    };
                    if score > best_score {
                        best_score = score;
                        best = j;
                    }
                }
                chosen.push(best);
            }
            assert_eq!(rank.order, chosen, "seed {seed}");
        }
    }

    #[test]
    fn ranking_invariant_under_monotone_column_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400;
        let d = 4;
        let mut x = vec![0.0; n * d];
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..d {
                x[i * d + j] = rng.sample::<f64, _>(StandardNormal);
            }
            y[i] = x[i * d] - 0.5 * x[i * d + 2];
        }
        let base = mrmr_rank(&x, n, d, &y, d, &cfg()).unwrap();
        let mut warped = x.clone();
        for i in 0..n {
            warped[i * d] = warped[i * d].exp();
            warped[i * d + 1] = warped[i * d + 1].powi(3);
            warped[i * d + 2] = (warped[i * d + 2] * 0.2).tanh();
        }
        let after = mrmr_rank(&warped, n, d, &y, d, &cfg()).unwrap();
        assert_eq!(base.order, after.order);
        for (a, b) in base.scores.iter().zip(&after.scores) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_function_of_target_carries_full_binned_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1024;
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x: Vec<f64> = y.iter().map(|v| (3.0 * v).exp()).collect();
        let mi = mutual_information(&x, &y, &cfg()).unwrap();
        assert!((mi - 3.0).abs() < 1e-9, "monotone function of y carries H(y) = 3 bits, got {mi}");
    }

    #[test]
    fn pearson_basics() {
        let n = 300;
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut x = vec![0.0; n * d];
        for i in 0..n {
            let v: f64 = rng.sample(StandardNormal);
            x[i * d] = v;
            x[i * d + 1] = -v;
            x[i * d + 2] = 4.2;
        }
        let (rho, constant) = pearson_matrix(&x, n, d);
        assert_eq!(constant, vec![2]);
        assert!((rho[0] - 1.0).abs() < 1e-12);
        assert!((rho[1] + 1.0).abs() < 1e-12);
        assert_eq!(rho[2], 0.0);
        assert_eq!(rho[d + 1], 1.0);
    }

    #[test]
    fn pearson_independent_columns_nearly_uncorrelated() {
        let n = 10_000;
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (rho, _) = pearson_matrix(&x, n, d);
        for a in 0..d {
            for b in 0..d {
                if a != b {
                    assert!(rho[a * d + b].abs() <= 0.05);
                }
            }
        }
    }
}
