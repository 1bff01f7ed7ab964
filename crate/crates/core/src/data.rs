//! Weather and PV power time series: ingest, cleaning, lag features,
//! min-max scaling and chronological splitting.
//!
//! Frames are immutable; every operation returns a new frame.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use ndarray::Array2;
use thiserror::Error;

pub const IRRADIANCE: &str = "irradiance";
pub const TEMPERATURE: &str = "temperature";
pub const HUMIDITY: &str = "humidity";
pub const WIND_SPEED: &str = "wind_speed";
pub const WIND_DIRECTION: &str = "wind_direction";
pub const PV_POWER: &str = "pv_power";
pub const PREV_PV_POWER: &str = "prev_pv_power";

/// Column order of the canonical CSV layout.
pub const CANONICAL_COLUMNS: [&str; 6] = [
    IRRADIANCE,
    TEMPERATURE,
    HUMIDITY,
    WIND_SPEED,
    WIND_DIRECTION,
    PV_POWER,
];

pub const DEFAULT_STEP_SECONDS: i64 = 300;
pub const SECONDS_PER_DAY: i64 = 86_400;
/// 365 days; leap days simply find no partner row.
pub const PREVIOUS_YEAR_SECONDS: i64 = 365 * SECONDS_PER_DAY;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{column}` not found (available: {available})")]
    Schema { column: String, available: String },
    #[error("timestamps must strictly increase: line {line} has {timestamp}")]
    Ordering { line: usize, timestamp: String },
    #[error("column `{column}` has {found} values, expected {expected}")]
    Shape {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("lag of {lag}s is not a multiple of the {step}s step")]
    Alignment { lag: i64, step: i64 },
    #[error("frame spans {span}s, which does not exceed the {lag}s lag")]
    LagTooLong { span: i64, lag: i64 },
    #[error("column `{0}` already exists")]
    DuplicateColumn(String),
    #[error("split ratio {ratio} on {rows} rows leaves one side empty")]
    Split { ratio: f64, rows: usize },
    #[error("step must be positive, got {0}")]
    Step(i64),
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Accepts RFC 3339 (`2019-01-01T00:05:00Z`, offsets allowed) and naive
/// `YYYY-MM-DD[T ]HH:MM[:SS]` read as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(d.timestamp());
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
    .map(|d| d.and_utc().timestamp())
}

/// Timestamped table of named numeric columns. Timestamps are UTC seconds
/// and strictly increasing; `step_seconds` is the nominal sampling step
/// (rows may be missing after cleaning).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<i64>,
    step_seconds: i64,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeriesFrame {
    pub fn new(
        timestamps: Vec<i64>,
        step_seconds: i64,
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DataError> {
        if step_seconds <= 0 {
            return Err(DataError::Step(step_seconds));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DataError::Ordering {
                line: i + 2,
                timestamp: format_timestamp(timestamps[i + 1]),
            });
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut values = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if col.len() != timestamps.len() {
                return Err(DataError::Shape {
                    column: name,
                    expected: timestamps.len(),
                    found: col.len(),
                });
            }
            if names.contains(&name) {
                return Err(DataError::DuplicateColumn(name));
            }
            names.push(name);
            values.push(col);
        }
        Ok(TimeSeriesFrame {
            timestamps,
            step_seconds,
            names,
            columns: values,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn step_seconds(&self) -> i64 {
        self.step_seconds
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64], DataError> {
        self.column(name).ok_or_else(|| DataError::Schema {
            column: name.to_string(),
            available: self.names.join(", "),
        })
    }

    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self, DataError> {
        if self.column(name).is_some() {
            return Err(DataError::DuplicateColumn(name.into()));
        }
        if values.len() != self.len() {
            return Err(DataError::Shape {
                column: name.into(),
                expected: self.len(),
                found: values.len(),
            });
        }
        let mut out = self.clone();
        out.names.push(name.into());
        out.columns.push(values);
        Ok(out)
    }

    /// Rows at `indices`, which must be increasing.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        TimeSeriesFrame {
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
            step_seconds: self.step_seconds,
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        TimeSeriesFrame {
            timestamps: self.timestamps[range.clone()].to_vec(),
            step_seconds: self.step_seconds,
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
        }
    }

    /// `len × names.len()` matrix of the named columns.
    pub fn to_matrix(&self, names: &[&str]) -> Result<Array2<f64>, DataError> {
        let cols: Vec<&[f64]> = names
            .iter()
            .map(|n| self.require(n))
            .collect::<Result<_, _>>()?;
        Ok(Array2::from_shape_fn((self.len(), cols.len()), |(i, j)| cols[j][i]))
    }

    /// CSV with a `timestamp` column followed by every data column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, &ts) in self.timestamps.iter().enumerate() {
            record.clear();
            record.push(format_timestamp(ts));
            record.extend(self.columns.iter().map(|c| c[i].to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush().map_err(|e| DataError::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.into(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Maps canonical column names to the headers of a particular CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub timestamp: String,
    /// `(canonical name, source header)`; every entry must be present.
    pub columns: Vec<(String, String)>,
    /// Also read every other column under its own header name.
    pub keep_extra: bool,
    pub step_seconds: i64,
}

impl CsvSchema {
    /// The layout this crate writes: `timestamp,irradiance,...,pv_power`.
    pub fn canonical() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            columns: CANONICAL_COLUMNS
                .iter()
                .map(|c| (c.to_string(), c.to_string()))
                .collect(),
            keep_extra: true,
            step_seconds: DEFAULT_STEP_SECONDS,
        }
    }

    /// Column names of DKA Solar Centre (Alice Springs) 5-minute exports.
    pub fn dka() -> Self {
        let map = [
            (IRRADIANCE, "Global_Horizontal_Radiation"),
            (TEMPERATURE, "Weather_Temperature_Celsius"),
            (HUMIDITY, "Weather_Relative_Humidity"),
            (WIND_SPEED, "Wind_Speed"),
            (WIND_DIRECTION, "Wind_Direction"),
            (PV_POWER, "Active_Power"),
        ];
        CsvSchema {
            timestamp: "timestamp".into(),
            columns: map
                .iter()
                .map(|(c, s)| (c.to_string(), s.to_string()))
                .collect(),
            keep_extra: false,
            step_seconds: DEFAULT_STEP_SECONDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line in the source file.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub frame: TimeSeriesFrame,
    pub rejects: Vec<Reject>,
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Ingested, DataError> {
    let f = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.into(),
        source,
    })?;
    ingest_reader(std::io::BufReader::new(f), schema)
}

/// Reads a CSV. Rows with an unparseable timestamp or a cell that is not a
/// finite number are rejected and reported, never silently dropped.
pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Ingested, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| DataError::Schema {
            column: name.to_string(),
            available: header.iter().collect::<Vec<_>>().join(", "),
        })
    };
    let ts_idx = find(&schema.timestamp)?;
    let mut wanted: Vec<(String, usize)> = schema
        .columns
        .iter()
        .map(|(canon, src)| find(src).map(|i| (canon.clone(), i)))
        .collect::<Result<_, _>>()?;
    if schema.keep_extra {
        for (i, h) in header.iter().enumerate() {
            if i != ts_idx && !wanted.iter().any(|(_, j)| *j == i) {
                wanted.push((h.to_string(), i));
            }
        }
    }

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut rejects = Vec::new();
    let mut values = Vec::with_capacity(wanted.len());
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let Some(ts) = record.get(ts_idx).and_then(parse_timestamp) else {
            rejects.push(Reject {
                line,
                reason: format!("unparseable timestamp {:?}", record.get(ts_idx).unwrap_or("")),
            });
            continue;
        };
        values.clear();
        let mut bad = None;
        for (name, idx) in &wanted {
            let cell = record.get(*idx).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    bad = Some(format!("column `{name}`: {cell:?} is not a finite number"));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            rejects.push(Reject { line, reason });
            continue;
        }
        if let Some(&last) = timestamps.last() {
            if ts <= last {
                return Err(DataError::Ordering {
                    line,
                    timestamp: format_timestamp(ts),
                });
            }
        }
        timestamps.push(ts);
        for (c, v) in columns.iter_mut().zip(&values) {
            c.push(*v);
        }
    }
    let frame = TimeSeriesFrame::new(
        timestamps,
        schema.step_seconds,
        wanted.into_iter().map(|(n, _)| n).zip(columns).collect(),
    )?;
    Ok(Ingested { frame, rejects })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanConfig {
    pub plant_rating_kw: f64,
    pub irradiance_limit: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            plant_rating_kw: 250.0,
            irradiance_limit: 1600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CleanEvent {
    /// Row removed because `column` was missing or not finite.
    Dropped { timestamp: i64, column: String },
    /// Negative power set to zero.
    Clamped { timestamp: i64, original: f64 },
    /// Kept, but flagged as implausible.
    Anomalous {
        timestamp: i64,
        column: String,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CleanLog {
    pub events: Vec<CleanEvent>,
}

impl CleanLog {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.count(|e| matches!(e, CleanEvent::Dropped { .. }))
    }

    pub fn clamped(&self) -> usize {
        self.count(|e| matches!(e, CleanEvent::Clamped { .. }))
    }

    pub fn anomalous(&self) -> usize {
        self.count(|e| matches!(e, CleanEvent::Anomalous { .. }))
    }

    fn count(&self, f: impl Fn(&CleanEvent) -> bool) -> usize {
        self.events.iter().filter(|e| f(e)).count()
    }

    pub fn summary(&self) -> String {
        format!(
            "dropped = {}\nclamped = {}\nanomalous = {}\n",
            self.dropped(),
            self.clamped(),
            self.anomalous()
        )
    }
}

/// Drops rows with a non-finite value in any column, clamps negative power
/// to zero and flags irradiance above the limit or power above the plant
/// rating.
pub fn clean(frame: &TimeSeriesFrame, cfg: &CleanConfig) -> (TimeSeriesFrame, CleanLog) {
    let mut log = CleanLog::default();
    let mut keep = Vec::with_capacity(frame.len());
    for (i, &ts) in frame.timestamps.iter().enumerate() {
        match frame.columns.iter().position(|c| !c[i].is_finite()) {
            Some(c) => log.events.push(CleanEvent::Dropped {
                timestamp: ts,
                column: frame.names[c].clone(),
            }),
            None => keep.push(i),
        }
    }
    let mut out = frame.select_rows(&keep);
    let power = out.names.iter().position(|n| n == PV_POWER);
    let irr = out.names.iter().position(|n| n == IRRADIANCE);
    for i in 0..out.len() {
        let ts = out.timestamps[i];
        if let Some(p) = power {
            let v = out.columns[p][i];
            if v < 0.0 {
                log.events.push(CleanEvent::Clamped {
                    timestamp: ts,
                    original: v,
                });
                out.columns[p][i] = 0.0;
            } else if v > cfg.plant_rating_kw {
                log.events.push(CleanEvent::Anomalous {
                    timestamp: ts,
                    column: PV_POWER.into(),
                    value: v,
                });
            }
        }
        if let Some(g) = irr {
            let v = out.columns[g][i];
            if v > cfg.irradiance_limit {
                log.events.push(CleanEvent::Anomalous {
                    timestamp: ts,
                    column: IRRADIANCE.into(),
                    value: v,
                });
            }
        }
    }
    (out, log)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LagLog {
    /// Rows within the first lag-span, which can never have a partner.
    pub warmup_dropped: usize,
    /// Timestamps whose partner row `t − lag` is missing.
    pub gap_dropped: Vec<i64>,
}

/// Appends `prev_pv_power[t] = pv_power[t − lag]`, matched by timestamp.
/// Rows without a partner are dropped.
pub fn make_lag_feature(
    frame: &TimeSeriesFrame,
    lag_seconds: i64,
) -> Result<(TimeSeriesFrame, LagLog), DataError> {
    let step = frame.step_seconds;
    if lag_seconds <= 0 || lag_seconds % step != 0 {
        return Err(DataError::Alignment {
            lag: lag_seconds,
            step,
        });
    }
    let power = frame.require(PV_POWER)?;
    if frame.column(PREV_PV_POWER).is_some() {
        return Err(DataError::DuplicateColumn(PREV_PV_POWER.into()));
    }
    let ts = &frame.timestamps;
    let span = match (ts.first(), ts.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    };
    if span <= lag_seconds {
        return Err(DataError::LagTooLong {
            span,
            lag: lag_seconds,
        });
    }
    let mut log = LagLog::default();
    let mut keep = Vec::new();
    let mut prev = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let want = t - lag_seconds;
        if want < ts[0] {
            log.warmup_dropped += 1;
            continue;
        }
        match ts[..i].binary_search(&want) {
            Ok(j) => {
                keep.push(i);
                prev.push(power[j]);
            }
            Err(_) => log.gap_dropped.push(t),
        }
    }
    let out = frame.select_rows(&keep).with_column(PREV_PV_POWER, prev)?;
    Ok((out, log))
}

/// Observed range of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        MinMax { min, max }
    }

    /// `(v − min) / (max − min)`, or 0 for a constant column. Values outside
    /// the fitted range map outside `[0, 1]`.
    pub fn scale(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            (v - self.min) / range
        } else {
            0.0
        }
    }

    pub fn unscale(&self, s: f64) -> f64 {
        s * (self.max - self.min) + self.min
    }
}

/// Per-column min-max parameters, fitted on one split and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub columns: Vec<(String, MinMax)>,
}

impl ScalingParams {
    pub fn fit(frame: &TimeSeriesFrame, names: &[&str]) -> Result<Self, DataError> {
        let columns = names
            .iter()
            .map(|n| Ok((n.to_string(), MinMax::fit(frame.require(n)?))))
            .collect::<Result<_, DataError>>()?;
        Ok(ScalingParams { columns })
    }

    pub fn get(&self, name: &str) -> Option<MinMax> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, m)| *m)
    }

    fn map(
        &self,
        frame: &TimeSeriesFrame,
        f: impl Fn(&MinMax, f64) -> f64,
    ) -> Result<TimeSeriesFrame, DataError> {
        let mut out = frame.clone();
        for (name, mm) in &self.columns {
            let idx = out
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| DataError::Schema {
                    column: name.clone(),
                    available: frame.names.join(", "),
                })?;
            for v in &mut out.columns[idx] {
                *v = f(mm, *v);
            }
        }
        Ok(out)
    }

    /// Scales every fitted column; other columns pass through.
    pub fn apply(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame, DataError> {
        self.map(frame, MinMax::scale)
    }

    pub fn inverse(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame, DataError> {
        self.map(frame, MinMax::unscale)
    }

    /// One `name min max` line per column.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (n, m) in &self.columns {
            let _ = writeln!(s, "{n} {} {}", m.min, m.max);
        }
        s
    }

    pub fn from_text(text: &str) -> Option<Self> {
        let columns = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut it = l.split_whitespace();
                let name = it.next()?.to_string();
                let min = it.next()?.parse().ok()?;
                let max = it.next()?.parse().ok()?;
                it.next().is_none().then_some((name, MinMax { min, max }))
            })
            .collect::<Option<_>>()?;
        Some(ScalingParams { columns })
    }
}

/// Chronological split: the first `⌈ratio·n⌉` rows train, the rest test.
pub fn split_train_test(
    frame: &TimeSeriesFrame,
    ratio: f64,
) -> Result<(TimeSeriesFrame, TimeSeriesFrame), DataError> {
    let n = frame.len();
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Split { ratio, rows: n });
    }
    // The tolerance keeps products like 0.7 × 10 = 7.000000000000001 at 7.
    let n_train = (ratio * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::Split { ratio, rows: n });
    }
    Ok((frame.slice_rows(0..n_train), frame.slice_rows(n_train..n)))
}
