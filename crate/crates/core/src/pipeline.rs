//! End-to-end experiment: load, clean, lag, rank features, split, scale,
//! train the symbolic regressor and the MLP side by side, average them and
//! score all three on the held-out tail.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{
    self, CleanConfig, CleanLog, CsvSchema, LagLog, MinMax, Reject, ScalingParams,
    TimeSeriesFrame, PREV_PV_POWER, PV_POWER, SECONDS_PER_DAY,
};
use crate::error::{Error, Result, StageExt};
use crate::expr::ExprTree;
use crate::featsel::{self, ImportanceConfig, ImportanceReport};
use crate::gp::{self, GpConfig, GpRunReport};
use crate::metrics::{self, CvReport, FoldMode, FoldPlan, MetricsReport};
use crate::mlp::{self, Activation, BatchMode, MlpConfig, MlpSearchSpace, NetworkParams};
use crate::pvsynth::{self, PvPlantParams, WeatherSim};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synth,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    #[default]
    Canonical,
    Dka,
}

impl SchemaKind {
    pub fn schema(self, step_seconds: i64) -> CsvSchema {
        let mut s = match self {
            SchemaKind::Canonical => CsvSchema::canonical(),
            SchemaKind::Dka => CsvSchema::dka(),
        };
        s.step_seconds = step_seconds;
        s
    }
}

/// How the two sub-model predictions are combined. Only the equal average
/// exists; the field is kept so weighted combiners can be added later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    EqualAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// CSV input when `source = "csv"`.
    pub path: Option<PathBuf>,
    pub schema: SchemaKind,
    pub step_seconds: i64,
    /// Usable days of synthetic data, after the lag warm-up.
    pub days: usize,
    /// Lag of the `prev_pv_power` column in days; 0 disables it.
    pub lag_days: i64,
    /// Optional `[start, end)` window applied after the lag is built.
    pub start: Option<String>,
    pub end: Option<String>,
    /// Power above this is flagged by cleaning; defaults to 1.25 × the
    /// plant's rating.
    pub plant_rating_kw: Option<f64>,
    pub weather: WeatherSim,
    pub plant: PvPlantParams,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Synth,
            path: None,
            schema: SchemaKind::Canonical,
            step_seconds: data::DEFAULT_STEP_SECONDS,
            days: 60,
            lag_days: 365,
            start: None,
            end: None,
            plant_rating_kw: None,
            weather: WeatherSim::default(),
            plant: PvPlantParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub target: String,
    /// Columns considered for selection; empty means every non-target column.
    pub candidates: Vec<String>,
    pub top_k: usize,
    /// Skip ranking and use exactly these columns.
    pub fixed: Vec<String>,
    pub importance: ImportanceConfig,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            target: PV_POWER.into(),
            candidates: Vec::new(),
            top_k: 2,
            fixed: Vec::new(),
            importance: ImportanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Mini-batch size; absent means full batch.
    pub batch_size: Option<usize>,
    pub init_scale: f64,
    /// Random-search candidates; 0 trains the configuration above as is.
    pub search_budget: usize,
    pub search: MlpSearchSpace,
}

impl Default for MlpSection {
    fn default() -> Self {
        let base = MlpConfig::default();
        MlpSection {
            hidden: base.layer_widths[1..base.layer_widths.len() - 1].to_vec(),
            activation: base.hidden_activation,
            learning_rate: base.learning_rate,
            max_iterations: base.max_iterations,
            batch_size: None,
            init_scale: base.init_scale,
            search_budget: 0,
            search: MlpSearchSpace::default(),
        }
    }
}

impl MlpSection {
    pub fn to_config(&self, inputs: usize, seed: u64) -> MlpConfig {
        let mut layer_widths = vec![inputs];
        layer_widths.extend(&self.hidden);
        layer_widths.push(1);
        MlpConfig {
            layer_widths,
            hidden_activation: self.activation,
            learning_rate: self.learning_rate,
            max_iterations: self.max_iterations,
            batch_mode: self.batch_size.map_or(BatchMode::FullBatch, BatchMode::MiniBatch),
            seed,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub train_ratio: f64,
    /// Timestamp splitting train from test; overrides `train_ratio`.
    pub split_at: Option<String>,
    /// Cross-validation blocks over the whole frame; 0 skips CV.
    pub cv_folds: usize,
    pub cv_mode: FoldMode,
    pub combine: Combine,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            train_ratio: 0.8,
            split_at: None,
            cv_folds: 0,
            cv_mode: FoldMode::ExpandingWindow,
            combine: Combine::EqualAverage,
        }
    }
}

/// Everything that defines an experiment. Sub-model seeds are derived from
/// `seed`; seeds set inside `[gp]` or `[data.weather]` are overridden.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSection,
    pub features: FeatureSection,
    pub gp: GpConfig,
    pub mlp: MlpSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.data.source == DataSource::Csv && self.data.path.is_none() {
            return bad("[data] source = \"csv\" needs a path".into());
        }
        if self.data.lag_days < 0 {
            return bad("[data] lag_days must be >= 0".into());
        }
        if self.data.days == 0 {
            return bad("[data] days must be positive".into());
        }
        if self.features.top_k == 0 && self.features.fixed.is_empty() {
            return bad("[features] top_k must be positive".into());
        }
        if !(self.eval.train_ratio > 0.0 && self.eval.train_ratio < 1.0) {
            return bad(format!("[eval] train_ratio {} not in (0, 1)", self.eval.train_ratio));
        }
        if self.eval.cv_folds == 1 {
            return bad("[eval] cv_folds must be 0 or at least 2".into());
        }
        for ts in [&self.data.start, &self.data.end, &self.eval.split_at]
            .into_iter()
            .flatten()
        {
            if data::parse_timestamp(ts).is_none() {
                return bad(format!("unparseable timestamp {ts:?}"));
            }
        }
        self.gp.validate()?;
        self.mlp.to_config(1, 0).validate()?;
        if self.mlp.search_budget > 0 {
            self.mlp.search.validate()?;
        }
        Ok(())
    }

    pub fn gp_seed(&self) -> u64 {
        derive_seed(self.seed, &[1])
    }

    pub fn mlp_seed(&self) -> u64 {
        derive_seed(self.seed, &[2])
    }
}

/// A loaded, cleaned, lagged and windowed dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub frame: TimeSeriesFrame,
    pub rejects: Vec<Reject>,
    pub clean_log: CleanLog,
    pub lag_log: Option<LagLog>,
}

/// Runs the load → clean → lag → window stages of `cfg`.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let (raw, rejects, rating) = match d.source {
        DataSource::Synth => {
            let sim = WeatherSim {
                seed: cfg.seed,
                ..d.weather.clone()
            };
            let warmup = d.lag_days.max(0) as usize;
            let frame = pvsynth::generate(&sim, &d.plant, d.days + warmup, d.step_seconds)
                .stage("synth")?;
            (frame, Vec::new(), d.plant.rating_kw())
        }
        DataSource::Csv => {
            let path = d.path.as_ref().expect("validated");
            let ing = data::ingest_csv(path, &d.schema.schema(d.step_seconds)).stage("ingest")?;
            (ing.frame, ing.rejects, d.plant.rating_kw())
        }
    };
    let clean_cfg = CleanConfig {
        plant_rating_kw: d.plant_rating_kw.unwrap_or(1.25 * rating),
        ..CleanConfig::default()
    };
    let (cleaned, clean_log) = data::clean(&raw, &clean_cfg);
    let (lagged, lag_log) = if d.lag_days > 0 {
        let (f, log) =
            data::make_lag_feature(&cleaned, d.lag_days * SECONDS_PER_DAY).stage("lag")?;
        (f, Some(log))
    } else {
        (cleaned, None)
    };
    let frame = window(&lagged, d.start.as_deref(), d.end.as_deref());
    if frame.is_empty() {
        return Err(Error::Config("no rows left after cleaning and windowing".into()));
    }
    Ok(Dataset {
        frame,
        rejects,
        clean_log,
        lag_log,
    })
}

fn window(frame: &TimeSeriesFrame, start: Option<&str>, end: Option<&str>) -> TimeSeriesFrame {
    let lo = start.and_then(data::parse_timestamp).unwrap_or(i64::MIN);
    let hi = end.and_then(data::parse_timestamp).unwrap_or(i64::MAX);
    let ts = frame.timestamps();
    let a = ts.partition_point(|&t| t < lo);
    let b = ts.partition_point(|&t| t < hi);
    frame.slice_rows(a..b.max(a))
}

/// Candidate columns: the configured list, or every non-target column.
pub fn candidate_features(frame: &TimeSeriesFrame, section: &FeatureSection) -> Vec<String> {
    if section.candidates.is_empty() {
        frame
            .column_names()
            .iter()
            .filter(|n| **n != section.target)
            .cloned()
            .collect()
    } else {
        section.candidates.clone()
    }
}

/// Scores `candidates` against `target` with both selectors.
pub fn rank_frame(
    frame: &TimeSeriesFrame,
    target: &str,
    candidates: &[String],
    cfg: &ImportanceConfig,
) -> Result<ImportanceReport> {
    let names: Vec<&str> = candidates.iter().map(String::as_str).collect();
    let x = frame.to_matrix(&names)?;
    let y = frame.require(target)?;
    Ok(featsel::importance(candidates, x.view(), y, cfg)?)
}

/// Averaged symbolic-regression and MLP model over a fixed feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub features: Vec<String>,
    pub target: String,
    /// Min-max parameters of every feature and the target.
    pub scaling: ScalingParams,
    pub sr: ExprTree,
    pub nn: NetworkParams,
    pub nn_config: MlpConfig,
    pub combine: Combine,
    /// Lag used to build `prev_pv_power` when an input lacks it.
    pub lag_seconds: Option<i64>,
}

/// Per-row predictions in target units. `sr` and `mlp` are the raw
/// sub-model outputs; `hybrid` is their average clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub sr: Vec<f64>,
    pub mlp: Vec<f64>,
    pub hybrid: Vec<f64>,
}

const MODEL_MANIFEST: &str = "manifest.toml";
const MODEL_SR: &str = "sr.sexpr";
const MODEL_MLP: &str = "mlp.txt";
const MODEL_SCALING: &str = "scaling.txt";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    features: Vec<String>,
    target: String,
    combine: Combine,
    lag_seconds: Option<i64>,
    mlp: MlpConfig,
}

impl HybridModel {
    fn scaler(&self, name: &str) -> Result<MinMax> {
        self.scaling
            .get(name)
            .ok_or_else(|| Error::Model(format!("no scaling parameters for `{name}`")))
    }

    /// Predictions for raw (unscaled) rows whose columns follow `features`.
    pub fn predict_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Predictions> {
        if x.ncols() != self.features.len() {
            return Err(crate::expr::ExprError::Shape {
                expected: self.features.len(),
                found: x.ncols(),
            }
            .into());
        }
        let mut xs = x.to_owned();
        for (j, name) in self.features.iter().enumerate() {
            let mm = self.scaler(name)?;
            xs.column_mut(j).mapv_inplace(|v| mm.scale(v));
        }
        let ty = self.scaler(&self.target)?;
        let sr: Vec<f64> = self
            .sr
            .evaluate_batch(xs.view())?
            .into_iter()
            .map(|v| ty.unscale(v))
            .collect();
        let nn: Vec<f64> = self
            .nn
            .predict(self.nn_config.hidden_activation, xs.view())?
            .into_iter()
            .map(|v| ty.unscale(v))
            .collect();
        let hybrid = combine(self.combine, &sr, &nn);
        Ok(Predictions {
            sr,
            mlp: nn,
            hybrid,
        })
    }

    /// Predictions for the feature columns of `frame`, building the lag
    /// column from `pv_power` when the model needs it and it is missing.
    pub fn predict_frame(&self, frame: &TimeSeriesFrame) -> Result<(TimeSeriesFrame, Predictions)> {
        let needs_lag = self.features.iter().any(|f| f == PREV_PV_POWER)
            && frame.column(PREV_PV_POWER).is_none();
        let frame = match (needs_lag, self.lag_seconds) {
            (true, Some(lag)) => data::make_lag_feature(frame, lag)?.0,
            _ => frame.clone(),
        };
        let names: Vec<&str> = self.features.iter().map(String::as_str).collect();
        let x = frame.to_matrix(&names)?;
        let p = self.predict_matrix(x.view())?;
        Ok((frame, p))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            features: self.features.clone(),
            target: self.target.clone(),
            combine: self.combine,
            lag_seconds: self.lag_seconds,
            mlp: self.nn_config.clone(),
        };
        let files = [
            (MODEL_MANIFEST, toml::to_string(&manifest).expect("manifest serializes")),
            (MODEL_SR, format!("{}\n", self.sr)),
            (MODEL_MLP, mlp::write_params(&self.nn, self.nn_config.hidden_activation)),
            (MODEL_SCALING, self.scaling.to_text()),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let manifest: Manifest = toml::from_str(&read(MODEL_MANIFEST)?)
            .map_err(|e| Error::Model(format!("{MODEL_MANIFEST}: {e}")))?;
        let sr = ExprTree::parse_sexpr(read(MODEL_SR)?.trim(), manifest.features.len())?;
        let (nn, hidden) = mlp::read_params(&read(MODEL_MLP)?)?;
        let scaling = ScalingParams::from_text(&read(MODEL_SCALING)?)
            .ok_or_else(|| Error::Model(format!("{MODEL_SCALING}: malformed")))?;
        let mut nn_config = manifest.mlp;
        nn_config.hidden_activation = hidden;
        if nn.widths() != nn_config.layer_widths || nn_config.layer_widths[0] != manifest.features.len() {
            return Err(Error::Model("network shape disagrees with the manifest".into()));
        }
        let model = HybridModel {
            features: manifest.features,
            target: manifest.target,
            scaling,
            sr,
            nn,
            nn_config,
            combine: manifest.combine,
            lag_seconds: manifest.lag_seconds,
        };
        for name in model.features.iter().chain([&model.target]) {
            model.scaler(name)?;
        }
        Ok(model)
    }
}

fn combine(how: Combine, sr: &[f64], nn: &[f64]) -> Vec<f64> {
    match how {
        // Averaging after the affine inverse scaling equals averaging
        // before it, and keeps `(a + a) / 2 == a` exact.
        Combine::EqualAverage => sr
            .iter()
            .zip(nn)
            .map(|(a, b)| ((a + b) / 2.0).max(0.0))
            .collect(),
    }
}

/// Hybrid prediction for one raw feature row.
pub fn predict_hybrid(model: &HybridModel, row: &[f64]) -> Result<f64> {
    let x = ArrayView2::from_shape((1, row.len()), row).expect("row view");
    Ok(model.predict_matrix(x)?.hybrid[0])
}

#[derive(Debug, Clone)]
pub struct TrainedHybrid {
    pub model: HybridModel,
    pub gp_report: GpRunReport,
    pub mlp_loss: Vec<f64>,
    pub search: Option<mlp::SearchResult>,
}

/// Fits scaling on `(x, y)`, then trains both sub-models concurrently on
/// the scaled data.
pub fn fit_hybrid(
    cfg: &ExperimentConfig,
    features: &[String],
    x: ArrayView2<'_, f64>,
    y: &[f64],
    gp_seed: u64,
    mlp_seed: u64,
) -> Result<TrainedHybrid> {
    if x.ncols() != features.len() {
        return Err(Error::Config(format!(
            "{} feature names for {} columns",
            features.len(),
            x.ncols()
        )));
    }
    let mut columns: Vec<(String, MinMax)> = features
        .iter()
        .zip(x.axis_iter(Axis(1)))
        .map(|(n, c)| (n.clone(), MinMax::fit(&c.to_vec())))
        .collect();
    let ty = MinMax::fit(y);
    columns.push((cfg.features.target.clone(), ty));
    let scaling = ScalingParams { columns };
    let mut xs = x.to_owned();
    for (j, (_, mm)) in scaling.columns[..features.len()].iter().enumerate() {
        xs.column_mut(j).mapv_inplace(|v| mm.scale(v));
    }
    let ys: Vec<f64> = y.iter().map(|&v| ty.scale(v)).collect();

    let gp_cfg = GpConfig {
        seed: gp_seed,
        ..cfg.gp.clone()
    };
    let base = cfg.mlp.to_config(features.len(), mlp_seed);
    let (gp_res, mlp_res) = rayon::join(
        || gp::evolve(&gp_cfg, xs.view(), &ys).stage("train_sr"),
        || train_mlp(cfg, &base, xs.view(), &ys).stage("train_mlp"),
    );
    let gp_report = gp_res?;
    let (trained, nn_config, search) = mlp_res?;
    Ok(TrainedHybrid {
        model: HybridModel {
            features: features.to_vec(),
            target: cfg.features.target.clone(),
            scaling,
            sr: gp_report.best.tree.clone(),
            nn: trained.params,
            nn_config,
            combine: cfg.eval.combine,
            lag_seconds: (cfg.data.lag_days > 0).then_some(cfg.data.lag_days * SECONDS_PER_DAY),
        },
        gp_report,
        mlp_loss: trained.loss_trace,
        search,
    })
}

type MlpOutcome = (mlp::TrainedMlp, MlpConfig, Option<mlp::SearchResult>);

/// Trains `base`, or, with a search budget, picks a configuration on the
/// last fifth of the training rows and retrains it on all of them.
fn train_mlp(
    cfg: &ExperimentConfig,
    base: &MlpConfig,
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> std::result::Result<MlpOutcome, mlp::MlpError> {
    if cfg.mlp.search_budget == 0 {
        return Ok((mlp::train(base, x, y)?, base.clone(), None));
    }
    let cut = (y.len() * 4 / 5).clamp(1, y.len().saturating_sub(1).max(1));
    let (tx, vx) = x.split_at(Axis(0), cut);
    let (ty, vy) = y.split_at(cut);
    let result = mlp::random_search(
        base,
        &cfg.mlp.search,
        cfg.mlp.search_budget,
        (tx, ty),
        (vx, vy),
        derive_seed(base.seed, &[3]),
    )?;
    let best = result.best.clone();
    Ok((mlp::train(&best, x, y)?, best, Some(result)))
}

/// Test-set scores of the three predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub sr: MetricsReport,
    pub mlp: MetricsReport,
    pub hybrid: MetricsReport,
}

impl ComparisonTable {
    pub fn score(actual: &[f64], p: &Predictions) -> Result<Self> {
        Ok(ComparisonTable {
            sr: metrics::score(actual, &p.sr)?,
            mlp: metrics::score(actual, &p.mlp)?,
            hybrid: metrics::score(actual, &p.hybrid)?,
        })
    }

    pub fn rows(&self) -> [(&'static str, &MetricsReport); 3] {
        [
            ("SymbolicRegressor", &self.sr),
            ("MLP", &self.mlp),
            ("Hybrid", &self.hybrid),
        ]
    }

    /// Hybrid RMSE and MAE must not exceed the mean of the sub-models'.
    pub fn check_convexity(&self) -> Result<()> {
        let rmse_bound = (self.sr.rmse + self.mlp.rmse) / 2.0;
        let mae_bound = (self.sr.mae + self.mlp.mae) / 2.0;
        if self.hybrid.rmse > rmse_bound {
            return Err(Error::Convexity(format!(
                "RMSE {} > {}",
                self.hybrid.rmse, rmse_bound
            )));
        }
        if self.hybrid.mae > mae_bound {
            return Err(Error::Convexity(format!("MAE {} > {}", self.hybrid.mae, mae_bound)));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,rmse,mae,r2,mean_bias,n\n");
        for (name, r) in self.rows() {
            let r2 = r.r2.map_or_else(|| "undefined".to_string(), |v| v.to_string());
            let _ = writeln!(s, "{name},{},{},{r2},{},{}", r.rmse, r.mae, r.mean_bias, r.n);
        }
        s
    }

    /// Aligned table for terminals.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<18} {:>10} {:>10} {:>9}\n", "model", "RMSE", "MAE", "R2 (%)");
        for (name, r) in self.rows() {
            let r2 = r.r2.map_or_else(|| "undefined".to_string(), |v| format!("{:.2}", 100.0 * v));
            let _ = writeln!(s, "{name:<18} {:>10.4} {:>10.4} {r2:>9}", r.rmse, r.mae);
        }
        s
    }
}

/// Signed relative improvement of the hybrid over one baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Improvement {
    Percent(f64),
    /// The baseline metric is zero, so no ratio exists.
    ZeroBaseline,
}

impl Improvement {
    fn new(baseline: f64, hybrid: f64) -> Self {
        if baseline == 0.0 {
            Improvement::ZeroBaseline
        } else {
            Improvement::Percent(100.0 * (baseline - hybrid) / baseline)
        }
    }

    pub fn percent(self) -> Option<f64> {
        match self {
            Improvement::Percent(p) => Some(p),
            Improvement::ZeroBaseline => None,
        }
    }
}

impl std::fmt::Display for Improvement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Improvement::Percent(p) => write!(f, "{p:.1}%"),
            Improvement::ZeroBaseline => f.write_str("n/a (zero baseline)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementReport {
    pub rmse_vs_sr: Improvement,
    pub rmse_vs_mlp: Improvement,
    pub mae_vs_sr: Improvement,
    pub mae_vs_mlp: Improvement,
}

impl ImprovementReport {
    pub fn to_text(&self) -> String {
        format!(
            "improvement_rmse_vs_sr = {}\nimprovement_rmse_vs_mlp = {}\n\
             improvement_mae_vs_sr = {}\nimprovement_mae_vs_mlp = {}\n",
            self.rmse_vs_sr, self.rmse_vs_mlp, self.mae_vs_sr, self.mae_vs_mlp
        )
    }
}

pub fn improvement_report(t: &ComparisonTable) -> ImprovementReport {
    ImprovementReport {
        rmse_vs_sr: Improvement::new(t.sr.rmse, t.hybrid.rmse),
        rmse_vs_mlp: Improvement::new(t.mlp.rmse, t.hybrid.rmse),
        mae_vs_sr: Improvement::new(t.sr.mae, t.hybrid.mae),
        mae_vs_mlp: Improvement::new(t.mlp.mae, t.hybrid.mae),
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: ComparisonTable,
    pub improvement: ImprovementReport,
    /// `None` when features were fixed in the config.
    pub importance: Option<ImportanceReport>,
    pub selected: Vec<String>,
    pub trained: TrainedHybrid,
    pub test_timestamps: Vec<i64>,
    pub test_actual: Vec<f64>,
    pub predictions: Predictions,
    pub cv: Option<CvReport>,
    pub rows_total: usize,
    pub rows_train: usize,
    pub rejects: usize,
    pub clean_log: CleanLog,
    pub lag_log: Option<LagLog>,
}

fn split(frame: &TimeSeriesFrame, eval: &EvalSection) -> Result<(TimeSeriesFrame, TimeSeriesFrame)> {
    match eval.split_at.as_deref().and_then(data::parse_timestamp) {
        Some(at) => {
            let k = frame.timestamps().partition_point(|&t| t < at);
            if k == 0 || k == frame.len() {
                return Err(data::DataError::Split {
                    ratio: k as f64 / frame.len() as f64,
                    rows: frame.len(),
                }
                .into());
            }
            Ok((frame.slice_rows(0..k), frame.slice_rows(k..frame.len())))
        }
        None => Ok(data::split_train_test(frame, eval.train_ratio)?),
    }
}

/// Runs the full experiment. Artifacts are written to `out_dir` if given.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let frame = &ds.frame;
    let (train, test) = split(frame, &cfg.eval).stage("split")?;

    let target = cfg.features.target.as_str();
    let (selected, importance) = if cfg.features.fixed.is_empty() {
        // Ranked on the training rows only, so the test tail stays unseen.
        let candidates = candidate_features(frame, &cfg.features);
        let report = rank_frame(&train, target, &candidates, &cfg.features.importance)
            .stage("rank")?;
        (report.top(cfg.features.top_k), Some(report))
    } else {
        (cfg.features.fixed.clone(), None)
    };
    let names: Vec<&str> = selected.iter().map(String::as_str).collect();

    let train_x = train.to_matrix(&names).stage("select")?;
    let train_y = train.require(target).stage("select")?;
    let trained = fit_hybrid(cfg, &selected, train_x.view(), train_y, cfg.gp_seed(), cfg.mlp_seed())?;

    let test_x = test.to_matrix(&names).stage("select")?;
    let test_y = test.require(target).stage("select")?.to_vec();
    let predictions = trained.model.predict_matrix(test_x.view()).stage("predict")?;
    let table = ComparisonTable::score(&test_y, &predictions).stage("score")?;
    table.check_convexity().stage("score")?;
    let improvement = improvement_report(&table);

    let cv = if cfg.eval.cv_folds >= 2 {
        let x = frame.to_matrix(&names).stage("cv")?;
        let y = frame.require(target).stage("cv")?;
        Some(cross_validate(cfg, &selected, x.view(), y).stage("cv")?)
    } else {
        None
    };

    let outcome = ExperimentOutcome {
        table,
        improvement,
        importance,
        selected,
        trained,
        test_timestamps: test.timestamps().to_vec(),
        test_actual: test_y,
        predictions,
        cv,
        rows_total: frame.len(),
        rows_train: train.len(),
        rejects: ds.rejects.len(),
        clean_log: ds.clean_log,
        lag_log: ds.lag_log,
    };
    if let Some(dir) = out_dir {
        write_artifacts(cfg, &outcome, dir).stage("write")?;
    }
    Ok(outcome)
}

/// Time-ordered CV of the hybrid on raw features. Each fold refits the
/// scaling and both sub-models with seeds derived from the fold's size.
pub fn cross_validate(
    cfg: &ExperimentConfig,
    features: &[String],
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> Result<CvReport> {
    let plan = FoldPlan::new(y.len(), cfg.eval.cv_folds, cfg.eval.cv_mode)?;
    let trainer = |tx: ArrayView2<'_, f64>, ty: &[f64], ex: ArrayView2<'_, f64>| -> Result<Vec<f64>> {
        let key = ty.len() as u64;
        let t = fit_hybrid(
            cfg,
            features,
            tx,
            ty,
            derive_seed(cfg.gp_seed(), &[key]),
            derive_seed(cfg.mlp_seed(), &[key]),
        )?;
        Ok(t.model.predict_matrix(ex)?.hybrid)
    };
    metrics::k_fold_cv(&plan, &trainer, x, y)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn predictions_csv(timestamps: &[i64], actual: &[f64], p: &Predictions) -> String {
    let mut s = String::from("timestamp,actual,sr,mlp,hybrid\n");
    for i in 0..timestamps.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            data::format_timestamp(timestamps[i]),
            actual[i],
            p.sr[i],
            p.mlp[i],
            p.hybrid[i]
        );
    }
    s
}

/// `key = value` summary of an experiment. Contains no timings, so equal
/// runs give equal text.
pub fn summary_text(cfg: &ExperimentConfig, o: &ExperimentOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "rows = {}", o.rows_total);
    let _ = writeln!(s, "rows_train = {}", o.rows_train);
    let _ = writeln!(s, "rows_test = {}", o.test_actual.len());
    let _ = writeln!(s, "rejected_rows = {}", o.rejects);
    let _ = writeln!(s, "cleaning_dropped = {}", o.clean_log.dropped());
    let _ = writeln!(s, "cleaning_clamped = {}", o.clean_log.clamped());
    let _ = writeln!(s, "cleaning_anomalous = {}", o.clean_log.anomalous());
    if let Some(l) = &o.lag_log {
        let _ = writeln!(s, "lag_warmup_dropped = {}", l.warmup_dropped);
        let _ = writeln!(s, "lag_gap_dropped = {}", l.gap_dropped.len());
    }
    let _ = writeln!(s, "selected_features = {}", o.selected.join(","));
    let _ = writeln!(s, "sr_expression = {}", o.trained.model.sr);
    let _ = writeln!(s, "sr_generations = {}", o.trained.gp_report.generations_executed);
    let _ = writeln!(s, "mlp_layers = {:?}", o.trained.model.nn_config.layer_widths);
    for (name, r) in o.table.rows() {
        let key = name.to_lowercase();
        let _ = writeln!(s, "{key}_rmse = {}", r.rmse);
        let _ = writeln!(s, "{key}_mae = {}", r.mae);
        let _ = writeln!(s, "{key}_r2 = {}", r.r2.map_or("undefined".into(), |v| v.to_string()));
    }
    s.push_str(&o.improvement.to_text());
    if let Some(cv) = &o.cv {
        let _ = writeln!(s, "cv_mean_rmse = {}", cv.mean_rmse);
        let _ = writeln!(s, "cv_mean_mae = {}", cv.mean_mae);
    }
    s
}

fn write_artifacts(cfg: &ExperimentConfig, o: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, "comparison.csv", &o.table.to_csv())?;
    write_file(
        dir,
        "predictions.csv",
        &predictions_csv(&o.test_timestamps, &o.test_actual, &o.predictions),
    )?;
    write_file(dir, "gp_trace.csv", &o.trained.gp_report.trace_csv())?;
    write_file(dir, "gp_report.txt", &o.trained.gp_report.to_text())?;
    let mut loss = String::from("iteration,mse\n");
    for (i, l) in o.trained.mlp_loss.iter().enumerate() {
        let _ = writeln!(loss, "{},{}", i + 1, l);
    }
    write_file(dir, "mlp_loss.csv", &loss)?;
    if let Some(imp) = &o.importance {
        write_file(dir, "importance.csv", &imp.to_csv())?;
    }
    if let Some(cv) = &o.cv {
        write_file(dir, "cv.csv", &cv.to_csv())?;
    }
    write_file(dir, "summary.txt", &summary_text(cfg, o))?;
    o.trained.model.save(&dir.join("model"))
}

/// Scores a saved model on a frame holding its features and the target.
pub fn evaluate_model(
    model: &HybridModel,
    frame: &TimeSeriesFrame,
) -> Result<(ComparisonTable, TimeSeriesFrame, Predictions)> {
    let (frame, p) = model.predict_frame(frame)?;
    let actual = frame.require(&model.target)?;
    let table = ComparisonTable::score(actual, &p)?;
    Ok((table, frame, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{ExprNode, OpKind};
    use crate::mlp::Layer;
    use ndarray::{array, Array1, Array2};

    fn constant_model(sr: f64, nn: f64) -> HybridModel {
        // Identity scaling on the target, so sub-model outputs are in kW.
        let unit = MinMax { min: 0.0, max: 1.0 };
        HybridModel {
            features: vec!["a".into()],
            target: PV_POWER.into(),
            scaling: ScalingParams {
                columns: vec![("a".into(), unit), (PV_POWER.into(), unit)],
            },
            sr: ExprTree::constant(sr, 1).unwrap(),
            nn: NetworkParams {
                layers: vec![Layer {
                    weights: Array2::zeros((1, 1)),
                    bias: Array1::from(vec![nn]),
                }],
            },
            nn_config: MlpConfig {
                layer_widths: vec![1, 1],
                ..MlpConfig::default()
            },
            combine: Combine::EqualAverage,
            lag_seconds: None,
        }
    }

    #[test]
    fn hybrid_is_average() {
        assert_eq!(predict_hybrid(&constant_model(10.0, 10.0), &[0.3]).unwrap(), 10.0);
        assert_eq!(predict_hybrid(&constant_model(8.0, 12.0), &[0.3]).unwrap(), 10.0);
        assert_eq!(predict_hybrid(&constant_model(-2.0, 0.0), &[0.3]).unwrap(), 0.0);
        assert!(predict_hybrid(&constant_model(1.0, 1.0), &[0.3, 0.1]).is_err());
    }

    #[test]
    fn hybrid_scales_inputs_and_outputs() {
        let mut m = constant_model(0.0, 0.0);
        m.sr = ExprTree::new(&ExprNode::Variable(0), 1).unwrap();
        m.scaling = ScalingParams {
            columns: vec![
                ("a".into(), MinMax { min: 0.0, max: 1000.0 }),
                (PV_POWER.into(), MinMax { min: 0.0, max: 200.0 }),
            ],
        };
        // sr: 500 → 0.5 → 100 kW; nn: bias 0 → 0 kW.
        let p = m.predict_matrix(array![[500.0]].view()).unwrap();
        assert_eq!((p.sr[0], p.mlp[0], p.hybrid[0]), (100.0, 0.0, 50.0));
    }

    #[test]
    fn model_round_trips_through_disk() {
        let mut m = constant_model(0.0, 0.25);
        m.sr = ExprTree::new(
            &ExprNode::op(
                OpKind::Add,
                vec![ExprNode::Variable(0), ExprNode::Constant(0.1 + 0.2)],
            ),
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = HybridModel::load(dir.path()).unwrap();
        assert_eq!(back, m);
    }

    fn report(rmse: f64, mae: f64) -> MetricsReport {
        MetricsReport {
            rmse,
            mae,
            r2: None,
            mean_bias: 0.0,
            n: 1,
        }
    }

    #[test]
    fn improvement_examples() {
        let t = ComparisonTable {
            sr: report(7.21, 4.92),
            mlp: report(6.48, 3.81),
            hybrid: report(5.58, 3.30),
        };
        let r = improvement_report(&t);
        assert_eq!(format!("{}", r.rmse_vs_sr), "22.6%");
        assert_eq!(format!("{}", r.mae_vs_mlp), "13.4%");
        let same = ComparisonTable {
            sr: report(2.0, 1.0),
            mlp: report(0.0, 0.0),
            hybrid: report(2.0, 1.0),
        };
        let r = improvement_report(&same);
        assert_eq!(r.rmse_vs_sr, Improvement::Percent(0.0));
        assert_eq!(r.rmse_vs_mlp, Improvement::ZeroBaseline);
        let worse = ComparisonTable {
            sr: report(1.0, 1.0),
            mlp: report(1.0, 1.0),
            hybrid: report(1.5, 1.0),
        };
        assert_eq!(improvement_report(&worse).rmse_vs_sr.percent(), Some(-50.0));
    }

    #[test]
    fn identical_submodels_give_identical_report() {
        let actual = [1.0, 4.0, 2.5, 0.0];
        let pred = vec![1.5, 3.0, 2.0, 0.5];
        let p = Predictions {
            sr: pred.clone(),
            mlp: pred.clone(),
            hybrid: combine(Combine::EqualAverage, &pred, &pred),
        };
        let t = ComparisonTable::score(&actual, &p).unwrap();
        assert_eq!(t.hybrid, t.sr);
        assert_eq!(t.hybrid, t.mlp);
        t.check_convexity().unwrap();
    }

    #[test]
    fn config_parses_sections() {
        let text = r#"
seed = 4
[data]
days = 3
lag_days = 1
[features]
top_k = 2
[gp]
population_size = 20
generations = 2
[mlp]
hidden = [5]
max_iterations = 10
[eval]
train_ratio = 0.75
combine = "equal_average"
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.gp.population_size, 20);
        assert_eq!(cfg.mlp.to_config(2, 0).layer_widths, vec![2, 5, 1]);
        let round = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(round, cfg);
        assert!(ExperimentConfig::from_toml_str("[gp]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[eval]\ntrain_ratio = 1.0\n").is_err());
    }

    #[test]
    fn tiny_experiment_end_to_end() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 2\n[data]\ndays = 4\nlag_days = 1\n[gp]\npopulation_size = 30\ngenerations = 3\n\
             [mlp]\nhidden = [4]\nmax_iterations = 50\n[eval]\ncv_folds = 3\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let o = run_experiment(&cfg, Some(dir.path())).unwrap();
        assert_eq!(o.selected.len(), 2);
        assert_eq!(o.rows_total, 4 * 288);
        assert_eq!(o.cv.as_ref().unwrap().folds.len(), 2);
        for f in [
            "comparison.csv",
            "predictions.csv",
            "gp_trace.csv",
            "gp_report.txt",
            "importance.csv",
            "cv.csv",
            "summary.txt",
            "model/manifest.toml",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let model = HybridModel::load(&dir.path().join("model")).unwrap();
        let test = o.test_timestamps.len();
        assert_eq!(o.predictions.hybrid.len(), test);
        let names: Vec<&str> = o.selected.iter().map(String::as_str).collect();
        let ds = load_dataset(&cfg).unwrap();
        let (_, tail) = data::split_train_test(&ds.frame, 0.8).unwrap();
        let again = model.predict_matrix(tail.to_matrix(&names).unwrap().view()).unwrap();
        assert_eq!(again, o.predictions);
    }
}
