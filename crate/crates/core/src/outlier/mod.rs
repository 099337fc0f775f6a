//! Multivariate outlier screening: three complementary detectors fused by a
//! weighted soft consensus.
//!
//! The detectors are a local distance-based outlier factor (LDOF), an
//! isolation forest, and Mahalanobis distance under shrinkage covariance.
//! Raw scores are robustly normalized to [0,1] (P1/P99 clip then min-max),
//! fused as `S = α·ldof + (1−α)/2·(iforest + mahalanobis)`, and a row is
//! flagged when `S ≥ τ`. Sweeping α and reading the knee of the flagged
//! count curve picks the weight.

mod iforest;

pub use iforest::iforest_scores;

use serde::Serialize;
use thiserror::Error;

use crate::stats::{knee_index, mean, percentile};

#[derive(Debug, Error)]
pub enum OutlierError {
    #[error("need more rows than neighbors: N={n}, k={k}")]
    TooFewRows { n: usize, k: usize },
    #[error("LDOF neighbor count must be at least 2, got {0}")]
    BadNeighborCount(usize),
    #[error("detector score arrays have mismatched lengths")]
    LengthMismatch,
    #[error("alpha grid needs at least {min} sorted points, got {got}")]
    BadAlphaGrid { got: usize, min: usize },
    #[error("flagged-count curve has no knee; pick alpha manually")]
    NoKnee,
}

/// Per-row raw and normalized scores of the three detectors.
#[derive(Debug, Clone, Serialize)]
pub struct DetectorScores {
    pub ldof: Vec<f64>,
    pub iforest: Vec<f64>,
    pub mahalanobis: Vec<f64>,
    /// Normalized to [0,1] in the same order: ldof, iforest, mahalanobis.
    pub normalized: [Vec<f64>; 3],
}

impl DetectorScores {
    pub fn len(&self) -> usize {
        self.ldof.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ldof.is_empty()
    }

    /// Compute all three detectors on the row-major `x` (n×d) and normalize.
    pub fn compute(
        x: &[f64],
        n: usize,
        d: usize,
        cfg: &ConsensusConfig,
    ) -> Result<DetectorScores, OutlierError> {
        let ldof = ldof_scores(x, n, d, cfg.ldof_k)?;
        let iforest = iforest_scores(x, n, d, cfg.trees, cfg.subsample, cfg.seed);
        let mahalanobis = mahalanobis_scores(x, n, d);
        let normalized = [
            normalize_scores(&ldof),
            normalize_scores(&iforest),
            normalize_scores(&mahalanobis),
        ];
        Ok(DetectorScores { ldof, iforest, mahalanobis, normalized })
    }
}

/// Weights and thresholds of the consensus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusConfig {
    /// LDOF weight; the other two detectors share (1−α)/2 each.
    pub alpha: f64,
    /// Consensus flag threshold.
    pub tau: f64,
    pub ldof_k: usize,
    pub trees: usize,
    pub subsample: usize,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig { alpha: 0.6, tau: 0.5, ldof_k: 20, trees: 100, subsample: 256, seed: 0 }
    }
}

/// Region counts of the three-detector Venn diagram plus the points the
/// soft consensus adds outside every binary set.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VennCounts {
    pub ldof_only: usize,
    pub iforest_only: usize,
    pub mahalanobis_only: usize,
    pub ldof_iforest: usize,
    pub ldof_mahalanobis: usize,
    pub iforest_mahalanobis: usize,
    pub all_three: usize,
    /// Consensus-flagged rows not flagged by any single detector.
    pub consensus_outside: usize,
}

/// Fused scores, flags, and the per-detector binary picture.
#[derive(Debug, Clone, Serialize)]
pub struct ConsensusResult {
    pub s: Vec<f64>,
    pub flags: Vec<bool>,
    /// Binary flags per detector from its own elbow threshold
    /// (ldof, iforest, mahalanobis).
    pub detector_flags: [Vec<bool>; 3],
    /// Flag counts per detector in the same order.
    pub detector_counts: [usize; 3],
    pub venn: VennCounts,
}

// ---------- LDOF ----------

/// Standardize columns (z-score); constant columns become 0.
fn standardized(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| x[i * d + j]).collect();
        let m = mean(&col);
        let s = crate::stats::pop_std(&col);
        for i in 0..n {
            out[i * d + j] = if s > 0.0 { (x[i * d + j] - m) / s } else { 0.0 };
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Local distance-based outlier factor on standardized columns:
/// mean distance to the k nearest neighbors over the mean pairwise distance
/// among those neighbors. Duplicate neighborhoods give +∞, clamped later by
/// the robust normalization.
pub fn ldof_scores(x: &[f64], n: usize, d: usize, k: usize) -> Result<Vec<f64>, OutlierError> {
    if k < 2 {
        return Err(OutlierError::BadNeighborCount(k));
    }
    if n <= k {
        return Err(OutlierError::TooFewRows { n, k });
    }
    let z = standardized(x, n, d);
    let row = |i: usize| &z[i * d..(i + 1) * d];

    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(row(i), row(j)), j))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let knn = &dists[..k];
            let d_knn = knn.iter().map(|(sq, _)| sq.sqrt()).sum::<f64>() / k as f64;
            let mut inner = 0.0;
            for a in 0..k {
                for b in a + 1..k {
                    inner += sq_dist(row(knn[a].1), row(knn[b].1)).sqrt();
                }
            }
            let d_inner = inner / (k * (k - 1) / 2) as f64;
            if d_inner > 0.0 {
                d_knn / d_inner
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(scores)
}

// ---------- Mahalanobis with shrinkage covariance ----------

/// Mahalanobis distance of each row from the column means under a
/// Ledoit–Wolf shrinkage of the sample covariance toward scaled identity.
/// Operates on standardized columns, so per-column affine rescaling cannot
/// move the scores; shrinkage keeps the matrix invertible even with
/// constant columns.
pub fn mahalanobis_scores(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    assert!(n > 2, "need more than two rows");
    let x = standardized(x, n, d);
    let mu: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<f64> = (0..n * d).map(|idx| x[idx] - mu[idx % d]).collect();

    // sample covariance (divide by n, matching the shrinkage derivation)
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = &centered[i * d..(i + 1) * d];
        for a in 0..d {
            for b in a..d {
                cov[a * d + b] += r[a] * r[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a * d + b] /= n as f64;
            cov[b * d + a] = cov[a * d + b];
        }
    }

    // Ledoit–Wolf intensity toward m·I
    let m = (0..d).map(|a| cov[a * d + a]).sum::<f64>() / d as f64;
    let d2: f64 = (0..d * d)
        .map(|idx| {
            let target = if idx / d == idx % d { m } else { 0.0 };
            (cov[idx] - target) * (cov[idx] - target)
        })
        .sum::<f64>()
        / d as f64;
    let mut b2 = 0.0;
    for i in 0..n {
        let r = &centered[i * d..(i + 1) * d];
        let mut norm = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dev = r[a] * r[b] - cov[a * d + b];
                norm += dev * dev;
            }
        }
        b2 += norm / d as f64;
    }
    b2 /= (n * n) as f64;
    let shrink = if d2 > 0.0 { (b2 / d2).clamp(0.0, 1.0) } else { 1.0 };

    let mut sigma = cov;
    for a in 0..d {
        for b in 0..d {
            sigma[a * d + b] *= 1.0 - shrink;
            if a == b {
                sigma[a * d + b] += shrink * m;
            }
        }
    }

    (0..n)
        .map(|i| {
            let r = &centered[i * d..(i + 1) * d];
            let sol = crate::stats::cholesky_solve(&sigma, r, d)
                .expect("shrinkage covariance is positive definite");
            r.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
        })
        .collect()
}

// ---------- normalization and consensus ----------

/// Robust normalization: clip at the scores' own P1/P99, then min-max map
/// to [0,1]. Constant inputs map to all zeros.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let p1 = percentile(raw, 0.01);
    let p99 = percentile(raw, 0.99);
    if !(p99 > p1) {
        return vec![0.0; raw.len()];
    }
    raw.iter()
        .map(|&v| {
            let clipped = v.clamp(p1, p99);
            (clipped - p1) / (p99 - p1)
        })
        .collect()
}

/// Elbow threshold for one detector: the knee of its sorted normalized
/// score curve. Falls back to `tau` when the curve has no knee.
fn elbow_threshold(normalized: &[f64], tau: f64) -> f64 {
    let mut sorted = normalized.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx: Vec<f64> = (0..sorted.len()).map(|i| i as f64).collect();
    match knee_index(&idx, &sorted) {
        Some(i) => sorted[i],
        None => tau,
    }
}

/// Weighted soft consensus over normalized detector scores.
pub fn consensus(
    normed: &DetectorScores,
    cfg: &ConsensusConfig,
) -> Result<ConsensusResult, OutlierError> {
    let n = normed.len();
    if normed.normalized.iter().any(|v| v.len() != n) {
        return Err(OutlierError::LengthMismatch);
    }
    let w_ldof = cfg.alpha;
    let w_other = (1.0 - cfg.alpha) / 2.0;
    let s: Vec<f64> = (0..n)
        .map(|i| {
            w_ldof * normed.normalized[0][i]
                + w_other * (normed.normalized[1][i] + normed.normalized[2][i])
        })
        .collect();
    let flags: Vec<bool> = s.iter().map(|&v| v >= cfg.tau).collect();

    let detector_flags: [Vec<bool>; 3] = std::array::from_fn(|k| {
        let thr = elbow_threshold(&normed.normalized[k], cfg.tau);
        normed.normalized[k].iter().map(|&v| v >= thr).collect()
    });
    let detector_counts =
        std::array::from_fn(|k| detector_flags[k].iter().filter(|&&f| f).count());

    let mut venn = VennCounts::default();
    for i in 0..n {
        let (l, f, m) = (detector_flags[0][i], detector_flags[1][i], detector_flags[2][i]);
        match (l, f, m) {
            (true, false, false) => venn.ldof_only += 1,
            (false, true, false) => venn.iforest_only += 1,
            (false, false, true) => venn.mahalanobis_only += 1,
            (true, true, false) => venn.ldof_iforest += 1,
            (true, false, true) => venn.ldof_mahalanobis += 1,
            (false, true, true) => venn.iforest_mahalanobis += 1,
            (true, true, true) => venn.all_three += 1,
            (false, false, false) => {
                if flags[i] {
                    venn.consensus_outside += 1;
                }
            }
        }
    }

    Ok(ConsensusResult { s, flags, detector_flags, detector_counts, venn })
}

// ---------- alpha sweep and elbow selection ----------

/// Flagged count per α on a sorted grid.
pub fn alpha_sweep(
    normed: &DetectorScores,
    cfg: &ConsensusConfig,
    alpha_grid: &[f64],
) -> Result<Vec<(f64, usize)>, OutlierError> {
    if alpha_grid.len() < 5 || alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OutlierError::BadAlphaGrid { got: alpha_grid.len(), min: 5 });
    }
    alpha_grid
        .iter()
        .map(|&alpha| {
            let res = consensus(normed, &ConsensusConfig { alpha, ..*cfg })?;
            Ok((alpha, res.flags.iter().filter(|&&f| f).count()))
        })
        .collect()
}

/// α at the knee of the count-vs-α curve (maximum perpendicular distance
/// from the chord joining the endpoints).
pub fn elbow_alpha(counts: &[(f64, usize)]) -> Result<f64, OutlierError> {
    let x: Vec<f64> = counts.iter().map(|(a, _)| *a).collect();
    let y: Vec<f64> = counts.iter().map(|(_, c)| *c as f64).collect();
    match knee_index(&x, &y) {
        Some(i) => Ok(x[i]),
        None => Err(OutlierError::NoKnee),
    }
}
