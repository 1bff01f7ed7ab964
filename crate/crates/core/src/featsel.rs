//! Feature ranking by elastic-net coefficients and boosted-stump gain.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

/// Tolerance of the standardization precondition.
pub const STANDARDIZED_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FeatselError {
    #[error("column {column} is not standardized (mean {mean}, variance {variance})")]
    NotStandardized {
        column: usize,
        mean: f64,
        variance: f64,
    },
    #[error("target is not centered (mean {0})")]
    NotCentered(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetConfig {
    pub lambda: f64,
    /// L1 share of the penalty.
    pub alpha: f64,
    pub max_sweeps: usize,
    /// Converged once no coefficient moves by this much in a sweep.
    pub tol: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            lambda: 0.01,
            alpha: 0.5,
            max_sweeps: 1000,
            tol: 1e-10,
        }
    }
}

impl ElasticNetConfig {
    pub fn validate(&self) -> Result<(), FeatselError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(FeatselError::Config(format!("lambda = {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FeatselError::Config(format!("alpha = {}", self.alpha)));
        }
        if self.max_sweeps == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(FeatselError::Config("max_sweeps and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective before the first sweep, then after each sweep.
    pub objective_trace: Vec<f64>,
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `(1/2n)‖y − Xβ‖² + λ(α‖β‖₁ + (1−α)/2·‖β‖²)`.
pub fn elastic_net_objective(
    x: ArrayView2<f64>,
    y: &[f64],
    beta: &[f64],
    cfg: &ElasticNetConfig,
) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = x
        .outer_iter()
        .zip(y)
        .map(|(row, &yi)| {
            let r = yi - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            r * r
        })
        .sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    rss / (2.0 * n) + cfg.lambda * (cfg.alpha * l1 + (1.0 - cfg.alpha) / 2.0 * l2)
}

/// Columns with mean 0 and population variance 1, except all-zero columns.
pub fn check_standardized(x: ArrayView2<f64>, y: &[f64]) -> Result<(), FeatselError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(FeatselError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(FeatselError::TooFewRows(0));
    }
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        let variance = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let zero = col.iter().all(|&v| v == 0.0);
        if !zero && (mean.abs() > STANDARDIZED_TOL || (variance - 1.0).abs() > STANDARDIZED_TOL) {
            return Err(FeatselError::NotStandardized {
                column: j,
                mean,
                variance,
            });
        }
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let scale = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1.0);
    if mean.abs() > STANDARDIZED_TOL * scale {
        return Err(FeatselError::NotCentered(mean));
    }
    Ok(())
}

/// Cyclic coordinate descent. Each coordinate update is the exact
/// minimizer `S(xⱼᵀr/n + βⱼ, λα) / (1 + λ(1−α))`, so the objective never
/// increases.
pub fn elastic_net_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &ElasticNetConfig,
) -> Result<ElasticNetFit, FeatselError> {
    cfg.validate()?;
    check_standardized(x, y)?;
    let (n, p) = x.dim();
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    let mut beta = vec![0.0; p];
    let mut resid = y.to_vec();
    let mut trace = vec![elastic_net_objective(x, y, &beta, cfg)];
    let l1 = cfg.lambda * cfg.alpha;
    let l2 = cfg.lambda * (1.0 - cfg.alpha);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let c = &cols[j];
            let rho = c.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf
                + norms[j] * beta[j];
            let new = soft_threshold(rho, l1) / (norms[j] + l2);
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(c) {
                    *r -= delta * a;
                }
                beta[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        trace.push(elastic_net_objective(x, y, &beta, cfg));
        if max_delta < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(ElasticNetFit {
        coefficients: beta,
        sweeps,
        converged,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostFit {
    /// Squared-error reduction credited to each feature.
    pub gains: Vec<f64>,
    /// Training RMSE after the mean baseline, then after each round.
    pub train_rmse: Vec<f64>,
    pub rounds: usize,
}

/// Least-squares gradient boosting with depth-1 trees. A round that finds
/// no split (all features constant, or residuals already zero) ends the fit.
pub fn boosted_stumps(
    x: ArrayView2<f64>,
    y: &[f64],
    rounds: usize,
    shrinkage: f64,
) -> Result<BoostFit, FeatselError> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(FeatselError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n < 2 {
        return Err(FeatselError::TooFewRows(n));
    }
    if rounds == 0 || !(shrinkage > 0.0 && shrinkage <= 1.0) {
        return Err(FeatselError::Config(format!(
            "rounds = {rounds}, shrinkage = {shrinkage}"
        )));
    }
    let cols: Vec<Vec<f64>> = x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let order: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mean = y.iter().sum::<f64>() / n as f64;
    let mut resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let rmse = |r: &[f64]| (r.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let mut gains = vec![0.0; p];
    let mut trace = vec![rmse(&resid)];
    let mut done = 0;
    for _ in 0..rounds {
        let total: f64 = resid.iter().sum();
        // (gain, feature, threshold, left mean, right mean)
        let mut best: Option<(f64, usize, f64, f64, f64)> = None;
        for j in 0..p {
            let (c, ord) = (&cols[j], &order[j]);
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += resid[ord[k]];
                let (a, b) = (c[ord[k]], c[ord[k + 1]]);
                if a == b {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right = total - left;
                let gain = left * left / nl + right * right / nr - total * total / n as f64;
                if best.is_none_or(|bst| gain > bst.0) {
                    best = Some((gain, j, a + (b - a) / 2.0, left / nl, right / nr));
                }
            }
        }
        let Some((gain, j, thr, lm, rm)) = best else {
            break;
        };
        if gain.is_nan() || gain <= 0.0 {
            break;
        }
        for (i, r) in resid.iter_mut().enumerate() {
            *r -= shrinkage * if cols[j][i] <= thr { lm } else { rm };
        }
        // The stump is a projection, so a step of η removes η(2−η) of its gain.
        gains[j] += shrinkage * (2.0 - shrinkage) * gain;
        trace.push(rmse(&resid));
        done += 1;
    }
    Ok(BoostFit {
        gains,
        train_rmse: trace,
        rounds: done,
    })
}

/// Per-feature split gain of [`boosted_stumps`].
pub fn boosted_stump_importance(
    x: ArrayView2<f64>,
    y: &[f64],
    rounds: usize,
    shrinkage: f64,
) -> Result<Vec<f64>, FeatselError> {
    boosted_stumps(x, y, rounds, shrinkage).map(|f| f.gains)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub name: String,
    pub en_score: f64,
    pub boost_score: f64,
    /// Mean of the two normalized scores.
    pub combined: f64,
    /// 1 is most important.
    pub rank: usize,
}

/// Per-feature scores in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by_key(|f| f.rank);
        v
    }

    /// Names of the `k` best features, best first.
    pub fn top(&self, k: usize) -> Vec<String> {
        self.ranked()
            .into_iter()
            .take(k)
            .map(|f| f.name.clone())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,en_score,boost_score,combined,rank\n");
        for f in self.ranked() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                f.name, f.en_score, f.boost_score, f.combined, f.rank
            );
        }
        s
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Normalizes each score vector to sum 1, averages them and ranks by the
/// average, ties going to the lower index.
pub fn rank_features(
    names: &[String],
    en_scores: &[f64],
    boost_scores: &[f64],
) -> Result<ImportanceReport, FeatselError> {
    if en_scores.len() != boost_scores.len() || names.len() != en_scores.len() {
        return Err(FeatselError::Shape(format!(
            "{} names, {} elastic-net scores, {} boost scores",
            names.len(),
            en_scores.len(),
            boost_scores.len()
        )));
    }
    if en_scores.iter().chain(boost_scores).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(FeatselError::Shape("scores must be finite and >= 0".into()));
    }
    let (en, bo) = (normalized(en_scores), normalized(boost_scores));
    let combined: Vec<f64> = en.iter().zip(&bo).map(|(a, b)| (a + b) / 2.0).collect();
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| combined[b].total_cmp(&combined[a]).then(a.cmp(&b)));
    let mut rank = vec![0; names.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    Ok(ImportanceReport {
        features: (0..names.len())
            .map(|i| FeatureImportance {
                name: names[i].clone(),
                en_score: en_scores[i],
                boost_score: boost_scores[i],
                combined: combined[i],
                rank: rank[i],
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    /// The elastic-net score is the mean |β| over this grid.
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    pub rounds: usize,
    pub shrinkage: f64,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            lambdas: vec![0.001, 0.01, 0.1],
            alpha: 0.5,
            max_sweeps: 1000,
            tol: 1e-10,
            rounds: 100,
            shrinkage: 0.1,
        }
    }
}

/// Columns shifted to mean 0 and scaled to unit population variance;
/// constant columns become all-zero.
pub fn standardize(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut out = x.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.mapv_inplace(|v| if std > 0.0 { (v - mean) / std } else { 0.0 });
    }
    out
}

/// Standardizes `x` and `y`, then scores every column with both selectors.
pub fn importance(
    names: &[String],
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &ImportanceConfig,
) -> Result<ImportanceReport, FeatselError> {
    if cfg.lambdas.is_empty() {
        return Err(FeatselError::Config("empty lambda grid".into()));
    }
    if y.len() != x.nrows() {
        return Err(FeatselError::Shape(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    let xs = standardize(x);
    let ys = standardize(ndarray::ArrayView2::from_shape((y.len(), 1), y).expect("column view"));
    let ys = ys.column(0).to_vec();
    let mut en = vec![0.0; x.ncols()];
    for &lambda in &cfg.lambdas {
        let fit = elastic_net_fit(
            xs.view(),
            &ys,
            &ElasticNetConfig {
                lambda,
                alpha: cfg.alpha,
                max_sweeps: cfg.max_sweeps,
                tol: cfg.tol,
            },
        )?;
        for (e, b) in en.iter_mut().zip(&fit.coefficients) {
            *e += b.abs() / cfg.lambdas.len() as f64;
        }
    }
    let boost = boosted_stump_importance(x, y, cfg.rounds, cfg.shrinkage)?;
    rank_features(names, &en, &boost)
}
