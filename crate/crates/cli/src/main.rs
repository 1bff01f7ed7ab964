//! `pvhybrid`: command-line front end for the hybrid PV forecaster.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad data or configuration,
//! 3 internal failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pvhybrid_core::data::{self, CleanConfig, TimeSeriesFrame, PREV_PV_POWER, SECONDS_PER_DAY};
use pvhybrid_core::error::ErrorClass;
use pvhybrid_core::metrics::FoldMode;
use pvhybrid_core::pipeline::{self, DataSource, ExperimentConfig, SchemaKind};
use pvhybrid_core::pvsynth::{self, PvPlantParams, WeatherSim};
use pvhybrid_core::{Error, HybridModel, Result};

#[derive(Debug, Parser)]
#[command(name = "pvhybrid", version, about = "Hybrid symbolic-regression + MLP PV power forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic weather + PV power CSV.
    Synth(SynthArgs),
    /// Read, validate and clean a CSV, writing it in the canonical layout.
    Ingest(IngestArgs),
    /// Rank candidate features and print the importance CSV.
    Rank(RankArgs),
    /// Train a hybrid model on the training split and save it.
    Train(TrainArgs),
    /// Apply a saved model to a CSV.
    Predict(PredictArgs),
    /// Score a saved model on a CSV holding the target.
    Evaluate(EvaluateArgs),
    /// Time-ordered cross-validation of the hybrid.
    Cv(CvArgs),
    /// Run the full experiment and print the comparison table.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Seed for every random stream; overrides any seed in a config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Schema {
    Canonical,
    Dka,
}

impl From<Schema> for SchemaKind {
    fn from(s: Schema) -> Self {
        match s {
            Schema::Canonical => SchemaKind::Canonical,
            Schema::Dka => SchemaKind::Dka,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CvMode {
    Contiguous,
    ExpandingWindow,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input CSV.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "canonical")]
    schema: Schema,
    /// Sampling step of the input in seconds.
    #[arg(long, default_value_t = data::DEFAULT_STEP_SECONDS)]
    step: i64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    days: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = data::DEFAULT_STEP_SECONDS)]
    step: i64,
    /// Also emit `prev_pv_power` lagged by this many days. The extra
    /// warm-up days are simulated and then dropped.
    #[arg(long, default_value_t = 0)]
    lag_days: i64,
    /// Disable every noise term.
    #[arg(long)]
    noiseless: bool,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Power above this is flagged as anomalous.
    #[arg(long, default_value_t = CleanConfig::default().plant_rating_kw)]
    rating_kw: f64,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = data::PV_POWER)]
    target: String,
    /// Build `prev_pv_power` with this lag when the input lacks it.
    #[arg(long)]
    lag_days: Option<i64>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment TOML; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Read this CSV instead of the data source named in the config.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory the model is written to.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Also write per-row predictions here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<CvMode>,
    /// Write the per-fold CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for all artifacts; nothing is written when omitted.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Data => ExitCode::from(2),
                ErrorClass::Internal => ExitCode::from(3),
            }
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Rank(a) => rank(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cv(a) => cv(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_frame(frame: &TimeSeriesFrame, path: &Path) -> Result<()> {
    Ok(frame.write_csv_path(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_input(a: &InputArgs) -> Result<TimeSeriesFrame> {
    let schema = SchemaKind::from(a.schema).schema(a.step);
    let ing = data::ingest_csv(&a.input, &schema)?;
    if !ing.rejects.is_empty() {
        eprintln!("{}: {} rows rejected", a.input.display(), ing.rejects.len());
    }
    Ok(ing.frame)
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.lag_days < 0 {
        return Err(Error::Config("--lag-days must be non-negative".into()));
    }
    let seed = a.seed.seed.unwrap_or(0);
    let sim = if a.noiseless {
        WeatherSim::noiseless(seed)
    } else {
        WeatherSim {
            seed,
            ..WeatherSim::default()
        }
    };
    let plant = PvPlantParams::default();
    let frame = pvsynth::generate(&sim, &plant, a.days + a.lag_days as usize, a.step)?;
    let frame = if a.lag_days > 0 {
        data::make_lag_feature(&frame, a.lag_days * SECONDS_PER_DAY)?.0
    } else {
        frame
    };
    write_frame(&frame, &a.out)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let _ = a.seed;
    let schema = SchemaKind::from(a.input.schema).schema(a.input.step);
    let ing = data::ingest_csv(&a.input.input, &schema)?;
    for r in &ing.rejects {
        eprintln!("line {}: {}", r.line, r.reason);
    }
    let cfg = CleanConfig {
        plant_rating_kw: a.rating_kw,
        ..CleanConfig::default()
    };
    let (frame, log) = data::clean(&ing.frame, &cfg);
    eprintln!(
        "{} rows kept, {} rejected; {}",
        frame.len(),
        ing.rejects.len(),
        log.summary()
    );
    write_frame(&frame, &a.out)
}

fn rank(a: RankArgs) -> Result<()> {
    let mut frame = read_input(&a.input)?;
    if let Some(days) = a.lag_days {
        if frame.column(PREV_PV_POWER).is_none() {
            frame = data::make_lag_feature(&frame, days * SECONDS_PER_DAY)?.0;
        }
    }
    // Both selectors are deterministic; `--seed` is accepted for symmetry.
    let _ = a.seed;
    let section = pipeline::FeatureSection {
        target: a.target,
        ..Default::default()
    };
    let candidates = pipeline::candidate_features(&frame, &section);
    let report = pipeline::rank_frame(&frame, &section.target, &candidates, &section.importance)?;
    print(&report.to_csv())
}

fn load_config(a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = a.seed.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &a.input {
        cfg.data.source = DataSource::Csv;
        cfg.data.path = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    cfg.eval.cv_folds = 0;
    let o = pipeline::run_experiment(&cfg, None)?;
    o.trained.model.save(&a.model)?;
    print(&o.table.to_text())
}

fn predictions_only(frame: &TimeSeriesFrame, p: &pipeline::Predictions) -> String {
    let mut s = String::from("timestamp,sr,mlp,hybrid\n");
    for (i, &t) in frame.timestamps().iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            data::format_timestamp(t),
            p.sr[i],
            p.mlp[i],
            p.hybrid[i]
        );
    }
    s
}

fn predict(a: PredictArgs) -> Result<()> {
    let _ = a.seed;
    let model = HybridModel::load(&a.model)?;
    let frame = read_input(&a.input)?;
    let (frame, p) = model.predict_frame(&frame)?;
    let text = match frame.column(&model.target) {
        Some(actual) => pipeline::predictions_csv(frame.timestamps(), actual, &p),
        None => predictions_only(&frame, &p),
    };
    write_text(&a.out, &text)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let _ = a.seed;
    let model = HybridModel::load(&a.model)?;
    let frame = read_input(&a.input)?;
    let (table, frame, p) = pipeline::evaluate_model(&model, &frame)?;
    if let Some(out) = &a.out {
        let actual = frame.require(&model.target)?;
        write_text(out, &pipeline::predictions_csv(frame.timestamps(), actual, &p))?;
    }
    print(&table.to_text())
}

fn cv(a: CvArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(k) = a.folds {
        cfg.eval.cv_folds = k;
    }
    if let Some(m) = a.mode {
        cfg.eval.cv_mode = match m {
            CvMode::Contiguous => FoldMode::Contiguous,
            CvMode::ExpandingWindow => FoldMode::ExpandingWindow,
        };
    }
    if cfg.eval.cv_folds < 2 {
        return Err(Error::Config("cross-validation needs --folds >= 2".into()));
    }
    let ds = pipeline::load_dataset(&cfg)?;
    let target = cfg.features.target.as_str();
    let selected = if cfg.features.fixed.is_empty() {
        let candidates = pipeline::candidate_features(&ds.frame, &cfg.features);
        pipeline::rank_frame(&ds.frame, target, &candidates, &cfg.features.importance)?
            .top(cfg.features.top_k)
    } else {
        cfg.features.fixed.clone()
    };
    let names: Vec<&str> = selected.iter().map(String::as_str).collect();
    let x = ds.frame.to_matrix(&names)?;
    let y = ds.frame.require(target)?;
    let report = pipeline::cross_validate(&cfg, &selected, x.view(), y)?;
    let text = report.to_csv();
    match &a.out {
        Some(p) => write_text(p, &text),
        None => print(&text),
    }
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let o = pipeline::run_experiment(&cfg, a.out.as_deref())?;
    let mut text = o.table.to_text();
    text.push('\n');
    text.push_str(&pipeline::summary_text(&cfg, &o));
    print(&text)
}
