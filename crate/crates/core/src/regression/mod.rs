//! Model zoo and leakage-free cross-validation.
//!
//! Five regressor families — Lasso, Elastic Net, ε-SVR, random forest, and
//! second-order gradient boosting — are fitted under one k-fold protocol:
//! per fold the features are standardized on the training rows only, the
//! mRMR ranking is computed on the training rows only, and every top-k
//! subset is evaluated on the held-out fold. Out-of-fold predictions cover
//! each row exactly once.

pub mod linear;
pub mod svr;
pub mod tree;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mrmr::{mrmr_rank, MiConfig};
use crate::stats::derive_seed;
use linear::{fit_elastic_net, fit_lasso, ElasticNetConfig, LinearModel};
use svr::{Svr, SvrConfig};
use tree::{BoostConfig, ForestConfig, GradBoost, RandomForest};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("{what} did not converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },
    #[error("metrics need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("constant targets make R² undefined")]
    ConstantTargets,
    #[error("need at least as many rows as folds: n={n}, folds={folds}")]
    TooFewRows { n: usize, folds: usize },
    #[error("{family} fold {fold} k={k}: {source}")]
    Cell {
        family: &'static str,
        fold: usize,
        k: usize,
        #[source]
        source: Box<RegressionError>,
    },
    #[error(transparent)]
    Ranking(#[from] crate::mrmr::MrmrError),
}

// ---------- model specs ----------

/// One configured regressor family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModelSpec {
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, l1_ratio: f64 },
    Svr { c: f64, epsilon: f64, gamma: Option<f64> },
    RandomForest { trees: usize, max_depth: usize, min_leaf: usize },
    GradBoost { rounds: usize, learning_rate: f64, max_depth: usize, lambda: f64 },
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Lasso { .. } => "lasso",
            ModelSpec::ElasticNet { .. } => "elastic_net",
            ModelSpec::Svr { .. } => "svr",
            ModelSpec::RandomForest { .. } => "random_forest",
            ModelSpec::GradBoost { .. } => "grad_boost",
        }
    }

    pub fn parse_family(name: &str) -> Option<ModelSpec> {
        Some(match name {
            "lasso" => ModelSpec::Lasso { lambda: 0.01 },
            "elastic_net" => ModelSpec::ElasticNet { lambda: 0.01, l1_ratio: 0.5 },
            "svr" => ModelSpec::Svr { c: 10.0, epsilon: 0.01, gamma: None },
            "random_forest" => ModelSpec::RandomForest { trees: 300, max_depth: 14, min_leaf: 2 },
            "grad_boost" => ModelSpec::GradBoost {
                rounds: 500,
                learning_rate: 0.05,
                max_depth: 4,
                lambda: 1.0,
            },
            _ => return None,
        })
    }

    pub fn default_zoo() -> Vec<ModelSpec> {
        ["lasso", "elastic_net", "svr", "random_forest", "grad_boost"]
            .iter()
            .map(|f| ModelSpec::parse_family(f).unwrap())
            .collect()
    }
}

/// A fitted model of any family.
pub enum Model {
    Linear(LinearModel),
    Svr(Svr),
    Forest(RandomForest),
    Boost(GradBoost),
}

/// Fit `spec` on a row-major training design.
pub fn fit_model(
    spec: &ModelSpec,
    x: &[f64],
    n: usize,
    d: usize,
    y: &[f64],
    seed: u64,
) -> Result<Model, RegressionError> {
    Ok(match *spec {
        ModelSpec::Lasso { lambda } => Model::Linear(fit_lasso(x, n, d, y, lambda)?),
        ModelSpec::ElasticNet { lambda, l1_ratio } => Model::Linear(fit_elastic_net(
            x,
            n,
            d,
            y,
            &ElasticNetConfig { lambda, l1_ratio, ..Default::default() },
        )?),
        ModelSpec::Svr { c, epsilon, gamma } => Model::Svr(Svr::fit(
            x,
            n,
            d,
            y,
            &SvrConfig { c, epsilon, gamma, ..Default::default() },
        )?),
        ModelSpec::RandomForest { trees, max_depth, min_leaf } => Model::Forest(RandomForest::fit(
            x,
            n,
            d,
            y,
            &ForestConfig { trees, max_depth, min_leaf, mtry: None },
            seed,
        )),
        ModelSpec::GradBoost { rounds, learning_rate, max_depth, lambda } => {
            Model::Boost(GradBoost::fit(
                x,
                n,
                d,
                y,
                &BoostConfig { rounds, learning_rate, max_depth, lambda, ..Default::default() },
                seed,
            ))
        }
    })
}

/// Predict all rows of a row-major design.
pub fn predict(model: &Model, x: &[f64], n: usize, d: usize) -> Vec<f64> {
    match model {
        Model::Linear(m) => {
            let mut out = Vec::new();
            m.predict_into(x, n, d, &mut out);
            out
        }
        Model::Svr(m) => (0..n).map(|i| m.predict_row(&x[i * d..(i + 1) * d])).collect(),
        Model::Forest(m) => (0..n).map(|i| m.predict_row(&x[i * d..(i + 1) * d])).collect(),
        Model::Boost(m) => (0..n).map(|i| m.predict_row(&x[i * d..(i + 1) * d])).collect(),
    }
}

// ---------- metrics ----------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// Standard definitions; R² is relative to the mean of `y`.
pub fn metrics(y: &[f64], pred: &[f64]) -> Result<Metrics, RegressionError> {
    if y.len() != pred.len() || y.len() < 2 {
        return Err(RegressionError::TooFewValues(y.len().min(pred.len())));
    }
    let mean = crate::stats::mean(y);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut abs = 0.0;
    for (a, b) in y.iter().zip(pred) {
        ss_res += (a - b) * (a - b);
        ss_tot += (a - mean) * (a - mean);
        abs += (a - b).abs();
    }
    if ss_tot <= 0.0 {
        return Err(RegressionError::ConstantTargets);
    }
    let n = y.len() as f64;
    Ok(Metrics { r2: 1.0 - ss_res / ss_tot, rmse: (ss_res / n).sqrt(), mae: abs / n })
}

// ---------- cross-validation ----------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub k_grid: Vec<usize>,
    pub mi_bins: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 5, seed: 0, k_grid: vec![5, 10, 20, 30, 52], mi_bins: 8 }
    }
}

/// Shuffled near-equal fold assignment per row, deterministic per seed.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>, RegressionError> {
    if n < folds || folds < 2 {
        return Err(RegressionError::TooFewRows { n, folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "kfold"));
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    let base = n / folds;
    let extra = n % folds;
    let mut at = 0;
    for fold in 0..folds {
        let size = base + usize::from(fold < extra);
        for &row in &order[at..at + size] {
            assignment[row] = fold;
        }
        at += size;
    }
    Ok(assignment)
}

/// Metrics of one (family, k, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvCell {
    pub family: &'static str,
    pub k: usize,
    pub fold: usize,
    pub train: Metrics,
    pub validation: Metrics,
}

/// Mean ± sd of validation metrics over folds for one (family, k).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvAggregate {
    pub family: &'static str,
    pub k: usize,
    pub mean_val_r2: f64,
    pub sd_val_r2: f64,
    pub mean_val_rmse: f64,
    pub sd_val_rmse: f64,
    pub mean_val_mae: f64,
    pub mean_train_r2: f64,
}

/// Full cross-validation report.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub cells: Vec<CvCell>,
    pub aggregates: Vec<CvAggregate>,
    /// (family, k) with the lowest mean validation RMSE.
    pub best: (String, usize),
    /// Out-of-fold predictions of the best (family, k), aligned to rows.
    pub oof_predictions: Vec<f64>,
    /// Fold id per row.
    pub fold_assignment: Vec<usize>,
    /// Per-fold mRMR orders (training rows only), for audit.
    pub fold_rankings: Vec<Vec<usize>>,
}

fn standardize_on_train(
    x: &[f64],
    d: usize,
    train: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; d];
    for &i in train {
        for j in 0..d {
            mean[j] += x[i * d + j];
        }
    }
    for m in &mut mean {
        *m /= train.len() as f64;
    }
    let mut std = vec![0.0; d];
    for &i in train {
        for j in 0..d {
            let c = x[i * d + j] - mean[j];
            std[j] += c * c;
        }
    }
    for s in &mut std {
        *s = (*s / train.len() as f64).sqrt();
        if *s <= 0.0 {
            *s = 1.0;
        }
    }
    (mean, std)
}

fn gather(
    x: &[f64],
    d: usize,
    rows: &[usize],
    cols: &[usize],
    mean: &[f64],
    std: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &i in rows {
        for &j in cols {
            out.push((x[i * d + j] - mean[j]) / std[j]);
        }
    }
    out
}

/// Run every (family, k, fold) cell: standardization statistics and mRMR
/// ranking come from the training rows of each fold only.
pub fn cross_validate(
    x: &[f64],
    n: usize,
    d: usize,
    y: &[f64],
    specs: &[ModelSpec],
    cv: &CvConfig,
) -> Result<CvReport, RegressionError> {
    let assignment = kfold_split(n, cv.folds, cv.seed)?;
    let k_grid: Vec<usize> = cv.k_grid.iter().map(|&k| k.min(d)).filter(|&k| k > 0).collect();
    let mi_cfg = MiConfig { bins: cv.mi_bins };

    struct FoldData {
        train: Vec<usize>,
        val: Vec<usize>,
        ranking: Vec<usize>,
        mean: Vec<f64>,
        std: Vec<f64>,
    }

    let folds: Vec<FoldData> = (0..cv.folds)
        .map(|fold| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
            let val: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
            let x_train: Vec<f64> = train
                .iter()
                .flat_map(|&i| x[i * d..(i + 1) * d].iter().copied())
                .collect();
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let ranking = mrmr_rank(&x_train, train.len(), d, &y_train, d, &mi_cfg)?.order;
            let (mean, std) = standardize_on_train(x, d, &train);
            Ok(FoldData { train, val, ranking, mean, std })
        })
        .collect::<Result<_, RegressionError>>()?;

    // every (spec, k, fold) cell is independent
    let mut jobs = Vec::new();
    for spec in specs {
        for &k in &k_grid {
            for fold in 0..cv.folds {
                jobs.push((*spec, k, fold));
            }
        }
    }
    let results: Vec<Result<(CvCell, Vec<f64>), RegressionError>> = jobs
        .par_iter()
        .map(|&(spec, k, fold)| {
            let fd = &folds[fold];
            let cols = &fd.ranking[..k];
            let x_train = gather(x, d, &fd.train, cols, &fd.mean, &fd.std);
            let x_val = gather(x, d, &fd.val, cols, &fd.mean, &fd.std);
            let y_train: Vec<f64> = fd.train.iter().map(|&i| y[i]).collect();
            let y_val: Vec<f64> = fd.val.iter().map(|&i| y[i]).collect();
            let seed = derive_seed(cv.seed, &format!("{}/{k}/{fold}", spec.family()));
            let wrap = |e: RegressionError| RegressionError::Cell {
                family: spec.family(),
                fold,
                k,
                source: Box::new(e),
            };
            let model = fit_model(&spec, &x_train, fd.train.len(), k, &y_train, seed)
                .map_err(wrap)?;
            let pred_train = predict(&model, &x_train, fd.train.len(), k);
            let pred_val = predict(&model, &x_val, fd.val.len(), k);
            let cell = CvCell {
                family: spec.family(),
                k,
                fold,
                train: metrics(&y_train, &pred_train).map_err(wrap)?,
                validation: metrics(&y_val, &pred_val).map_err(wrap)?,
            };
            Ok((cell, pred_val))
        })
        .collect();

    let mut cells = Vec::with_capacity(jobs.len());
    let mut oof: std::collections::BTreeMap<(&'static str, usize), Vec<f64>> =
        std::collections::BTreeMap::new();
    for (job, result) in jobs.iter().zip(results) {
        let (cell, pred_val) = result?;
        let fd = &folds[job.2];
        let slot = oof.entry((cell.family, cell.k)).or_insert_with(|| vec![f64::NAN; n]);
        for (&row, &p) in fd.val.iter().zip(&pred_val) {
            slot[row] = p;
        }
        cells.push(cell);
    }

    let mut aggregates = Vec::new();
    for spec in specs {
        for &k in &k_grid {
            let vals: Vec<&CvCell> = cells
                .iter()
                .filter(|c| c.family == spec.family() && c.k == k)
                .collect();
            let series = |f: fn(&CvCell) -> f64| -> (f64, f64) {
                let v: Vec<f64> = vals.iter().map(|c| f(c)).collect();
                (crate::stats::mean(&v), crate::stats::sample_var(&v).sqrt())
            };
            let (mean_val_r2, sd_val_r2) = series(|c| c.validation.r2);
            let (mean_val_rmse, sd_val_rmse) = series(|c| c.validation.rmse);
            let (mean_val_mae, _) = series(|c| c.validation.mae);
            let (mean_train_r2, _) = series(|c| c.train.r2);
            aggregates.push(CvAggregate {
                family: spec.family(),
                k,
                mean_val_r2,
                sd_val_r2,
                mean_val_rmse,
                sd_val_rmse,
                mean_val_mae,
                mean_train_r2,
            });
        }
    }
    let best = aggregates
        .iter()
        .min_by(|a, b| a.mean_val_rmse.partial_cmp(&b.mean_val_rmse).unwrap())
        .map(|a| (a.family.to_string(), a.k))
        .expect("at least one aggregate");
    let oof_predictions = oof
        .get(&(best.0.as_str() as &str, best.1))
        .map(|v| v.to_vec())
        .unwrap_or_default();

    Ok(CvReport {
        cells,
        aggregates,
        best,
        oof_predictions,
        fold_assignment: assignment,
        fold_rankings: folds.into_iter().map(|f| f.ranking).collect(),
    })
}

// ---------- top-k curves and cumulative error ----------

/// Per-family (k, mean validation R²) series.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyCurve {
    pub family: String,
    pub points: Vec<(usize, f64)>,
}

/// One cumulative-RMSE point: error over rows with target ≤ threshold.
#[derive(Debug, Clone, Serialize)]
pub struct CumulativePoint {
    pub threshold: f64,
    pub rmse: Option<f64>,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopkCurve {
    pub families: Vec<FamilyCurve>,
    /// Cumulative RMSE of the best model's out-of-fold predictions against
    /// increasing concentration thresholds.
    pub cumulative: Vec<CumulativePoint>,
}

/// Cumulative RMSE over rows with `y ≤ threshold`, per threshold.
/// Empty buckets report None.
pub fn cumulative_rmse(y: &[f64], pred: &[f64], thresholds: &[f64]) -> Vec<CumulativePoint> {
    thresholds
        .iter()
        .map(|&threshold| {
            let mut sse = 0.0;
            let mut rows = 0;
            for (a, b) in y.iter().zip(pred) {
                if *a <= threshold && b.is_finite() {
                    sse += (a - b) * (a - b);
                    rows += 1;
                }
            }
            CumulativePoint {
                threshold,
                rmse: if rows > 0 { Some((sse / rows as f64).sqrt()) } else { None },
                rows,
            }
        })
        .collect()
}

/// Default threshold grid: 0.25 %v/v steps up to the target maximum.
pub fn threshold_grid(y: &[f64]) -> Vec<f64> {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut grid = Vec::new();
    let mut t = 0.25;
    while t < max + 0.25 {
        grid.push(t);
        t += 0.25;
    }
    grid
}

/// Plot-ready series from a finished report.
pub fn topk_curve(report: &CvReport, y: &[f64]) -> TopkCurve {
    let mut families: Vec<FamilyCurve> = Vec::new();
    for agg in &report.aggregates {
        match families.iter_mut().find(|f| f.family == agg.family) {
            Some(f) => f.points.push((agg.k, agg.mean_val_r2)),
            None => families.push(FamilyCurve {
                family: agg.family.to_string(),
                points: vec![(agg.k, agg.mean_val_r2)],
            }),
        }
    }
    for f in &mut families {
        f.points.sort_by_key(|&(k, _)| k);
    }
    let cumulative = cumulative_rmse(y, &report.oof_predictions, &threshold_grid(y));
    TopkCurve { families, cumulative }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kfold_sizes_disjoint_union_deterministic() {
        let a = kfold_split(10, 5, 3).unwrap();
        let b = kfold_split(10, 5, 3).unwrap();
        assert_eq!(a, b);
        for fold in 0..5 {
            assert_eq!(a.iter().filter(|&&f| f == fold).count(), 2);
        }
        assert!(kfold_split(3, 5, 0).is_err());
        // different seed shuffles differently
        let c = kfold_split(10, 5, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn metrics_identities() {
        let y = [0.0, 1.0, 2.0];
        let perfect = metrics(&y, &y).unwrap();
        assert_eq!(perfect.r2, 1.0);
        assert_eq!(perfect.rmse, 0.0);
        assert_eq!(perfect.mae, 0.0);
        let mean_pred = [1.0, 1.0, 1.0];
        let at_mean = metrics(&y, &mean_pred).unwrap();
        assert!(at_mean.r2.abs() < 1e-12);
        let off = metrics(&y, &[0.0, 1.0, 3.0]).unwrap();
        assert!((off.rmse - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((off.mae - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            metrics(&[2.0, 2.0], &[1.0, 1.0]),
            Err(RegressionError::ConstantTargets)
        ));
    }

    fn informative_dataset(n: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n * d];
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..d {
                x[i * d + j] = rng.sample::<f64, _>(StandardNormal);
            }
            y[i] = 1.2 * x[i * d] - 0.8 * x[i * d + 1]
                + 0.5 * (x[i * d + 2]).tanh()
                + 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        (x, y)
    }

    #[test]
    fn cross_validation_learns_informative_signal() {
        let n = 250;
        let d = 10;
        let (x, y) = informative_dataset(n, d, 1);
        let cv = CvConfig { folds: 5, seed: 7, k_grid: vec![3, d], mi_bins: 8 };
        let specs = [
            ModelSpec::parse_family("lasso").unwrap(),
            ModelSpec::parse_family("grad_boost").unwrap(),
        ];
        let report = cross_validate(&x, n, d, &y, &specs, &cv).unwrap();
        assert_eq!(report.cells.len(), 2 * 2 * 5);
        let best_agg = report
            .aggregates
            .iter()
            .find(|a| a.family == report.best.0 && a.k == report.best.1)
            .unwrap();
        assert!(best_agg.mean_val_r2 > 0.9, "best val R² {}", best_agg.mean_val_r2);
        // every row predicted exactly once out of fold
        assert_eq!(report.oof_predictions.len(), n);
        assert!(report.oof_predictions.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn no_leakage_ranking_and_statistics_ignore_validation_rows() {
        // recompute one fold's ranking and standardization from scratch on
        // the training rows alone and compare with the report
        let n = 200;
        let d = 8;
        let (x, y) = informative_dataset(n, d, 5);
        let cv = CvConfig { folds: 4, seed: 11, k_grid: vec![4], mi_bins: 8 };
        let specs = [ModelSpec::parse_family("lasso").unwrap()];
        let report = cross_validate(&x, n, d, &y, &specs, &cv).unwrap();
        let fold = 2;
        let train: Vec<usize> =
            (0..n).filter(|&i| report.fold_assignment[i] != fold).collect();
        let x_train: Vec<f64> = train
            .iter()
            .flat_map(|&i| x[i * d..(i + 1) * d].iter().copied())
            .collect();
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let rank = crate::mrmr::mrmr_rank(
            &x_train,
            train.len(),
            d,
            &y_train,
            d,
            &MiConfig::default(),
        )
        .unwrap();
        assert_eq!(report.fold_rankings[fold], rank.order);
    }

    #[test]
    fn permuted_targets_have_no_signal() {
        let n = 160;
        let d = 8;
        let (x, _) = informative_dataset(n, d, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let specs = [
            ModelSpec::parse_family("lasso").unwrap(),
            ModelSpec::parse_family("random_forest").unwrap(),
        ];
        let mut y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        use rand::seq::SliceRandom;
        y.shuffle(&mut rng);
        let cv = CvConfig { folds: 4, seed: 1, k_grid: vec![4], mi_bins: 8 };
        let report = cross_validate(&x, n, d, &y, &specs, &cv).unwrap();
        for agg in &report.aggregates {
            assert!(
                agg.mean_val_r2 < 0.2,
                "{} on noise target scored {}",
                agg.family,
                agg.mean_val_r2
            );
        }
    }

    #[test]
    fn full_k_ranking_is_a_permutation_and_linear_models_match_unranked() {
        let n = 150;
        let d = 6;
        let (x, y) = informative_dataset(n, d, 3);
        let cv = CvConfig { folds: 3, seed: 5, k_grid: vec![d], mi_bins: 8 };
        let specs = [ModelSpec::parse_family("lasso").unwrap()];
        let report = cross_validate(&x, n, d, &y, &specs, &cv).unwrap();
        for ranking in &report.fold_rankings {
            let mut sorted = ranking.clone();
            sorted.sort();
            assert_eq!(sorted, (0..d).collect::<Vec<_>>());
        }
        // fitting on all columns in natural order gives the same optimum
        let fold = 0;
        let fd_train: Vec<usize> =
            (0..n).filter(|&i| report.fold_assignment[i] != fold).collect();
        let (mean, std) = super::standardize_on_train(&x, d, &fd_train);
        let cols: Vec<usize> = (0..d).collect();
        let xt = super::gather(&x, d, &fd_train, &cols, &mean, &std);
        let yt: Vec<f64> = fd_train.iter().map(|&i| y[i]).collect();
        let natural = fit_lasso(&xt, fd_train.len(), d, &yt, 0.01).unwrap();
        let ranked_cols = &report.fold_rankings[fold];
        let xr = super::gather(&x, d, &fd_train, ranked_cols, &mean, &std);
        let ranked = fit_lasso(&xr, fd_train.len(), d, &yt, 0.01).unwrap();
        for (pos, &col) in ranked_cols.iter().enumerate() {
            assert!(
                (ranked.coefficients[pos] - natural.coefficients[col]).abs() < 1e-4,
                "column {col}: {} vs {}",
                ranked.coefficients[pos],
                natural.coefficients[col]
            );
        }
    }

    #[test]
    fn cumulative_rmse_reaches_global_at_top_threshold() {
        let y = [0.2, 0.6, 1.1, 1.9];
        let pred = [0.3, 0.5, 1.3, 1.6];
        let grid = threshold_grid(&y);
        let points = cumulative_rmse(&y, &pred, &grid);
        let global = metrics(&y, &pred).unwrap().rmse;
        let last = points.last().unwrap();
        assert_eq!(last.rows, 4);
        assert!((last.rmse.unwrap() - global).abs() < 1e-12);
        // the 0.25 bucket holds only the first row
        assert_eq!(points[0].rows, 1);
    }

    #[test]
    fn report_is_deterministic_for_fixed_seed() {
        let n = 120;
        let d = 6;
        let (x, y) = informative_dataset(n, d, 8);
        let cv = CvConfig { folds: 3, seed: 21, k_grid: vec![2, d], mi_bins: 8 };
        let specs = ModelSpec::default_zoo();
        let a = cross_validate(&x, n, d, &y, &specs, &cv).unwrap();
        let b = cross_validate(&x, n, d, &y, &specs, &cv).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
