//! Forecast scores and time-ordered cross-validation.

use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {actual} actual values vs {predicted} predictions")]
    Shape { actual: usize, predicted: usize },
    #[error("cannot score an empty series")]
    Empty,
    #[error("invalid fold plan: {0}")]
    Plan(String),
}

/// Arithmetic mean. Shared by [`score`] and callers that need the exact same
/// `ȳ` (the train-mean predictor scores an R² of exactly 0).
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Root mean squared error. Panics on length mismatch; use [`score`] for a
/// checked version.
pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len());
    let sse: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (p - y) * (p - y))
        .sum();
    (sse / y_true.len() as f64).sqrt()
}

/// RMSE, MAE and R² of a prediction, plus the signed mean bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the actual series is constant and R² is undefined.
    pub r2: Option<f64>,
    /// Mean of `ŷ − y`, i.e. the error average without the absolute value.
    pub mean_bias: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn r2_or_nan(&self) -> f64 {
        self.r2.unwrap_or(f64::NAN)
    }
}

pub fn score(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Shape {
            actual: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = y_true.len() as f64;
    let (mut sse, mut sae, mut bias) = (0.0, 0.0, 0.0);
    for (y, p) in y_true.iter().zip(y_pred) {
        let e = p - y;
        sse += e * e;
        sae += e.abs();
        bias += e;
    }
    let y_bar = mean(y_true);
    let sst: f64 = y_true.iter().map(|y| (y - y_bar) * (y - y_bar)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);
    Ok(MetricsReport {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r2,
        mean_bias: bias / n,
        n: y_true.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Train on every row outside the fold, as in plain k-fold.
    Contiguous,
    /// Train only on rows before the fold. The first block is never scored.
    ExpandingWindow,
}

/// `k` contiguous, disjoint blocks covering `0..n` in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub mode: FoldMode,
    pub folds: Vec<Range<usize>>,
}

impl FoldPlan {
    /// Splits `n` rows into `k` blocks whose sizes differ by at most one.
    pub fn new(n: usize, k: usize, mode: FoldMode) -> Result<Self, MetricsError> {
        if k < 2 {
            return Err(MetricsError::Plan(format!("k must be at least 2, got {k}")));
        }
        if k > n {
            return Err(MetricsError::Plan(format!(
                "k = {k} exceeds the {n} available rows"
            )));
        }
        let (base, extra) = (n / k, n % k);
        let mut start = 0;
        let folds = (0..k)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(FoldPlan { k, mode, folds })
    }

    /// `(train rows, evaluation rows)` for every evaluated fold.
    pub fn splits(&self) -> Vec<(usize, Vec<usize>, Range<usize>)> {
        self.folds
            .iter()
            .enumerate()
            .filter_map(|(i, fold)| {
                let train: Vec<usize> = match self.mode {
                    FoldMode::Contiguous => (0..self.folds.last()?.end)
                        .filter(|r| !fold.contains(r))
                        .collect(),
                    FoldMode::ExpandingWindow => {
                        if i == 0 {
                            return None;
                        }
                        (0..fold.start).collect()
                    }
                };
                Some((i, train, fold.clone()))
            })
            .collect()
    }
}

/// Something that can be fitted on a training split and asked for
/// predictions on an evaluation split.
pub trait Trainer: Sync {
    fn fit_predict(
        &self,
        train_x: ArrayView2<'_, f64>,
        train_y: &[f64],
        eval_x: ArrayView2<'_, f64>,
    ) -> crate::Result<Vec<f64>>;
}

impl<F> Trainer for F
where
    F: Fn(ArrayView2<'_, f64>, &[f64], ArrayView2<'_, f64>) -> crate::Result<Vec<f64>> + Sync,
{
    fn fit_predict(
        &self,
        train_x: ArrayView2<'_, f64>,
        train_y: &[f64],
        eval_x: ArrayView2<'_, f64>,
    ) -> crate::Result<Vec<f64>> {
        self(train_x, train_y, eval_x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub rows: Range<usize>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
    /// Mean over folds whose R² is defined; `None` if none is.
    pub mean_r2: Option<f64>,
}

impl CvReport {
    fn from_folds(folds: Vec<FoldResult>) -> Self {
        let stats = |v: Vec<f64>| {
            let m = mean(&v);
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
            (m, var.sqrt())
        };
        let (mean_rmse, std_rmse) = stats(folds.iter().map(|f| f.report.rmse).collect());
        let (mean_mae, std_mae) = stats(folds.iter().map(|f| f.report.mae).collect());
        let r2s: Vec<f64> = folds.iter().filter_map(|f| f.report.r2).collect();
        let mean_r2 = (!r2s.is_empty()).then(|| mean(&r2s));
        CvReport {
            folds,
            mean_rmse,
            std_rmse,
            mean_mae,
            std_mae,
            mean_r2,
        }
    }

    /// `fold,start,end,rmse,mae,r2`; `end` is exclusive.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,start,end,rmse,mae,r2\n");
        for f in &self.folds {
            let r2 = f.report.r2.map_or_else(|| "undefined".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                f.fold, f.rows.start, f.rows.end, f.report.rmse, f.report.mae, r2
            );
        }
        s
    }
}

fn take_rows(x: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Runs `trainer` on every fold of `plan`. Folds are evaluated in parallel;
/// the result does not depend on the number of workers.
pub fn k_fold_cv<T: Trainer + ?Sized>(
    plan: &FoldPlan,
    trainer: &T,
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> crate::Result<CvReport> {
    let n = plan.folds.last().map_or(0, |f| f.end);
    if n != x.nrows() || n != y.len() {
        return Err(MetricsError::Plan(format!(
            "plan covers {n} rows but data has {} rows and {} targets",
            x.nrows(),
            y.len()
        ))
        .into());
    }
    if let Some(empty) = plan.folds.iter().position(|f| f.is_empty()) {
        return Err(MetricsError::Plan(format!("fold {empty} has no rows")).into());
    }
    let results: crate::Result<Vec<FoldResult>> = plan
        .splits()
        .into_par_iter()
        .map(|(fold, train_rows, eval)| {
            let train_x = take_rows(x, &train_rows);
            let train_y: Vec<f64> = train_rows.iter().map(|&r| y[r]).collect();
            let eval_x = x.slice(ndarray::s![eval.clone(), ..]);
            let pred = trainer.fit_predict(train_x.view(), &train_y, eval_x)?;
            let report = score(&y[eval.clone()], &pred)?;
            Ok(FoldResult {
                fold,
                rows: eval,
                report,
            })
        })
        .collect();
    Ok(CvReport::from_folds(results?))
}
