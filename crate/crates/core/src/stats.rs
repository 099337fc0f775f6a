//! Small numeric helpers shared across modules: moments, percentiles,
//! dense symmetric solves, and knee-point detection.

/// Arithmetic mean. Returns 0 for an empty slice.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation (divide by n).
pub fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Sample variance (divide by n-1); 0 when fewer than two values.
pub fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Linear-interpolation percentile at quantile `q` in [0,1] on a sorted
/// slice: index `i = q·(n−1)`, value `v[⌊i⌋] + frac·(v[⌊i⌋+1] − v[⌊i⌋])`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let idx = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = idx.floor() as usize;
    let frac = idx - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Percentile of an unsorted slice, ignoring non-finite values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile_sorted(&v, q)
}

/// Solve the symmetric positive-definite system `A x = b` in place via
/// Cholesky decomposition. `a` is row-major `n×n`. Returns `None` when the
/// matrix is not positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    // backward: Lᵀ x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Index of the knee of a curve: the point with maximum perpendicular
/// distance from the chord joining the first and last points, after
/// normalizing both axes to [0,1]. Returns `None` when the curve is
/// degenerate (endpoints coincide or every point sits on the chord).
pub fn knee_index(x: &[f64], y: &[f64]) -> Option<usize> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 3 {
        return None;
    }
    let (x0, x1) = (x[0], x[n - 1]);
    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if (x1 - x0).abs() == 0.0 || (ymax - ymin).abs() == 0.0 {
        return None;
    }
    let nx = |v: f64| (v - x0) / (x1 - x0);
    let ny = |v: f64| (v - ymin) / (ymax - ymin);
    // chord from (nx0, ny0) to (nx1, ny1) in normalized coordinates
    let (ax, ay) = (0.0, ny(y[0]));
    let (bx, by) = (1.0, ny(y[n - 1]));
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();
    let mut best = 0.0;
    let mut best_i = None;
    for i in 1..n - 1 {
        let (px, py) = (nx(x[i]) - ax, ny(y[i]) - ay);
        let dist = (px * dy - py * dx).abs() / len;
        if dist > best {
            best = dist;
            best_i = Some(i);
        }
    }
    // a flat or linear curve has no meaningful knee
    if best < 1e-9 {
        return None;
    }
    best_i
}

/// Deterministically derive a stage seed from a master seed and a tag.
/// SplitMix64 over the master xor an FNV-1a hash of the tag.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
