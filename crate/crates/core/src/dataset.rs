//! Labeled time-series frames: CSV ingestion, synthetic generation with
//! injected anomalies, and chronological train/test splitting.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire_format::{SensorReading, SensorType};
use crate::Label;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("timestamps must strictly increase (row {row})")]
    NonMonotonicTimestamps { row: usize },
    #[error("row {row}, column {column:?}: cannot parse {value:?}")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("frame needs at least one feature column")]
    NoFeatures,
    #[error("inconsistent frame: {0}")]
    Shape(String),
    #[error(
        "injection rows {start}..{end} / features {features:?} outside a {rows}x{n_features} frame"
    )]
    InjectionOutOfBounds {
        start: usize,
        end: usize,
        features: Vec<usize>,
        rows: usize,
        n_features: usize,
    },
    #[error("split at fraction {0} leaves an empty partition")]
    DegenerateSplit(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Timestamps, a row-major feature matrix and per-row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<i64>,
    features: Array2<f64>,
    feature_names: Vec<String>,
    labels: Vec<Label>,
}

impl TimeSeriesFrame {
    pub fn new(
        timestamps: Vec<i64>,
        features: Array2<f64>,
        feature_names: Vec<String>,
        labels: Vec<Label>,
    ) -> Result<Self, DatasetError> {
        let n = features.nrows();
        if features.ncols() == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if timestamps.len() != n || labels.len() != n {
            return Err(DatasetError::Shape(format!(
                "{} timestamps, {} labels, {} feature rows",
                timestamps.len(),
                labels.len(),
                n
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(DatasetError::Shape(format!(
                "{} names for {} features",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DatasetError::NonMonotonicTimestamps { row: i + 1 });
        }
        Ok(Self {
            timestamps,
            features,
            feature_names,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn anomalous_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_anomalous()).count()
    }

    /// New frame holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DatasetError> {
        Self::new(
            rows.iter().map(|&i| self.timestamps[i]).collect(),
            self.features.select(Axis(0), rows),
            self.feature_names.clone(),
            rows.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Companion writer for [`load_csv`]: `timestamp,<features...>,label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".to_string());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.timestamps[i].to_string()];
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            rec.push(self.labels[i].as_u8().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Short content hash (hex) used to fingerprint training data.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.timestamps {
            h.update(t.to_le_bytes());
        }
        for v in self.features.iter() {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            h.update([l.as_u8()]);
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Column mapping for a labeled CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Integer millisecond timestamps. Without it rows are stamped
    /// `row * default_interval_ms`.
    #[serde(default = "default_timestamp_column")]
    pub timestamp_column: Option<String>,
    #[serde(default = "default_label_column")]
    pub label_column: Option<String>,
    /// Feature columns in order; `None` takes every other column.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Columns to leave out when `feature_columns` is `None`.
    #[serde(default)]
    pub ignore_columns: Vec<String>,
    #[serde(default = "default_normal_values")]
    pub normal_values: Vec<String>,
    #[serde(default = "default_anomalous_values")]
    pub anomalous_values: Vec<String>,
    #[serde(default = "default_interval_ms")]
    pub default_interval_ms: i64,
}

fn default_timestamp_column() -> Option<String> {
    Some("timestamp".into())
}

fn default_label_column() -> Option<String> {
    Some("label".into())
}

fn default_normal_values() -> Vec<String> {
    vec!["0".into()]
}

fn default_anomalous_values() -> Vec<String> {
    vec!["1".into()]
}

fn default_interval_ms() -> i64 {
    1000
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: default_timestamp_column(),
            label_column: default_label_column(),
            feature_columns: None,
            ignore_columns: Vec::new(),
            normal_values: default_normal_values(),
            anomalous_values: default_anomalous_values(),
            default_interval_ms: default_interval_ms(),
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesFrame, DatasetError> {
    read_csv(std::fs::File::open(path)?, schema)
}

pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<TimeSeriesFrame, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };

    let ts_col = schema.timestamp_column.as_deref().map(lookup).transpose()?;
    let label_col = schema.label_column.as_deref().map(lookup).transpose()?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, h)| {
                Some(*i) != ts_col
                    && Some(*i) != label_col
                    && !schema.ignore_columns.iter().any(|c| c == h)
            })
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    let feature_cols: Vec<usize> = feature_names
        .iter()
        .map(|n| lookup(n))
        .collect::<Result<_, _>>()?;

    let mut timestamps = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row numbers, header excluded
        let row = i + 1;
        let field = |col: usize| record.get(col).unwrap_or("");
        let parse_err = |col: usize| DatasetError::ParseError {
            row,
            column: headers.get(col).unwrap_or("").to_string(),
            value: field(col).to_string(),
        };

        let ts = match ts_col {
            Some(c) => {
                let text = field(c);
                text.parse::<i64>()
                    .ok()
                    .or_else(|| {
                        text.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .map(|v| v as i64)
                    })
                    .ok_or_else(|| parse_err(c))?
            }
            None => i as i64 * schema.default_interval_ms,
        };
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(DatasetError::NonMonotonicTimestamps { row });
            }
        }
        timestamps.push(ts);

        let label = match label_col {
            Some(c) => {
                let text = field(c);
                if schema.anomalous_values.iter().any(|v| v == text) {
                    Label::Anomalous
                } else if schema.normal_values.iter().any(|v| v == text) {
                    Label::Normal
                } else {
                    return Err(parse_err(c));
                }
            }
            None => Label::Normal,
        };
        labels.push(label);

        for &c in &feature_cols {
            let v: f64 = field(c).parse().map_err(|_| parse_err(c))?;
            if !v.is_finite() {
                return Err(parse_err(c));
            }
            values.push(v);
        }
    }
    let n = timestamps.len();
    let features = Array2::from_shape_vec((n, feature_cols.len()), values)
        .map_err(|e| DatasetError::Shape(e.to_string()))?;
    TimeSeriesFrame::new(timestamps, features, feature_names, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// Offset growing linearly to `magnitude` over the range.
    Ramp,
    /// Constant offset of `magnitude` over the range.
    Spike,
    /// Value frozen at its level on the first row, shifted by `magnitude`.
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyInjection {
    pub start_index: usize,
    /// Exclusive.
    pub end_index: usize,
    pub mode: InjectionMode,
    pub magnitude: f64,
    pub target_features: Vec<usize>,
}

/// Rows per day-like cycle of the synthetic base signal.
pub const SYNTH_PERIOD_ROWS: f64 = 240.0;
pub const SYNTH_INTERVAL_MS: i64 = 60_000;
pub const SYNTH_NOISE_STD: f64 = 0.1;

/// Per-feature sinusoid plus Gaussian noise, with the injected rows labeled
/// anomalous. Deterministic in `seed`.
pub fn synthesize(
    n_rows: usize,
    n_features: usize,
    seed: u64,
    injections: &[AnomalyInjection],
) -> Result<TimeSeriesFrame, DatasetError> {
    if n_features == 0 {
        return Err(DatasetError::NoFeatures);
    }
    for inj in injections {
        if !(inj.start_index < inj.end_index && inj.end_index <= n_rows)
            || inj.target_features.iter().any(|&f| f >= n_features)
        {
            return Err(DatasetError::InjectionOutOfBounds {
                start: inj.start_index,
                end: inj.end_index,
                features: inj.target_features.clone(),
                rows: n_rows,
                n_features,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SYNTH_NOISE_STD).expect("valid noise std");
    let mut features = Array2::zeros((n_rows, n_features));
    for ((t, f), v) in features.indexed_iter_mut() {
        let amplitude = 1.0 + 0.5 * f as f64;
        let offset = 20.0 + 5.0 * f as f64;
        let phase = 0.7 * f as f64;
        let angle = std::f64::consts::TAU * t as f64 / SYNTH_PERIOD_ROWS + phase;
        *v = offset + amplitude * angle.sin() + noise.sample(&mut rng);
    }

    let mut labels = vec![Label::Normal; n_rows];
    for inj in injections {
        let width = (inj.end_index - inj.start_index) as f64;
        for &f in &inj.target_features {
            let frozen = features[[inj.start_index, f]];
            for t in inj.start_index..inj.end_index {
                let k = (t - inj.start_index + 1) as f64;
                let cell = &mut features[[t, f]];
                match inj.mode {
                    InjectionMode::Ramp => *cell += inj.magnitude * k / width,
                    InjectionMode::Spike => *cell += inj.magnitude,
                    InjectionMode::Stuck => *cell = frozen + inj.magnitude,
                }
            }
        }
        labels[inj.start_index..inj.end_index].fill(Label::Anomalous);
    }

    let timestamps = (0..n_rows as i64).map(|i| i * SYNTH_INTERVAL_MS).collect();
    let names = (0..n_features).map(|f| format!("sensor_{f}")).collect();
    TimeSeriesFrame::new(timestamps, features, names, labels)
}

/// Chronological split. The training side keeps only normal rows; the test
/// side keeps everything.
pub fn split(
    frame: &TimeSeriesFrame,
    train_fraction: f64,
) -> Result<(TimeSeriesFrame, TimeSeriesFrame), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::DegenerateSplit(train_fraction));
    }
    let n = frame.n_rows();
    let cut = (n as f64 * train_fraction).round() as usize;
    let train_rows: Vec<usize> = (0..cut.min(n))
        .filter(|&i| !frame.labels[i].is_anomalous())
        .collect();
    let test_rows: Vec<usize> = (cut.min(n)..n).collect();
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(DatasetError::DegenerateSplit(train_fraction));
    }
    Ok((
        frame.select_rows(&train_rows)?,
        frame.select_rows(&test_rows)?,
    ))
}

/// Frames joined end to end. Later frames are shifted in time so the
/// timestamps keep increasing; every frame must carry the same columns.
pub fn concat(frames: &[TimeSeriesFrame]) -> Result<TimeSeriesFrame, DatasetError> {
    let first = frames.first().ok_or(DatasetError::NoFeatures)?;
    let mut timestamps: Vec<i64> = Vec::new();
    let mut labels = Vec::new();
    let mut blocks = Vec::with_capacity(frames.len());
    for f in frames {
        if f.feature_names != first.feature_names {
            return Err(DatasetError::Shape(format!(
                "columns {:?} differ from {:?}",
                f.feature_names, first.feature_names
            )));
        }
        let (Some(&start), Some(&last)) = (f.timestamps.first(), timestamps.last()) else {
            timestamps.extend(&f.timestamps);
            labels.extend(&f.labels);
            blocks.push(f.features.view());
            continue;
        };
        let step = f.timestamps.get(1).map_or(1, |t| t - start);
        let shift = (last + step - start).max(0);
        timestamps.extend(f.timestamps.iter().map(|t| t + shift));
        labels.extend(&f.labels);
        blocks.push(f.features.view());
    }
    let features =
        ndarray::concatenate(Axis(0), &blocks).map_err(|e| DatasetError::Shape(e.to_string()))?;
    TimeSeriesFrame::new(timestamps, features, first.feature_names.clone(), labels)
}

/// Pivot decoded sensor readings into a frame: one row per timestamp, one
/// column per `(type, sensor id)` named like `TH001`. Rows missing any
/// column are dropped and counted. All rows are labeled normal.
pub fn from_readings(readings: &[SensorReading]) -> Result<(TimeSeriesFrame, usize), DatasetError> {
    let mut columns: BTreeMap<(u16, SensorType), usize> = BTreeMap::new();
    for r in readings {
        columns
            .entry((r.identity.sensor_id(), r.sensor_type))
            .or_insert(0);
    }
    if columns.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    for (i, v) in columns.values_mut().enumerate() {
        *v = i;
    }
    let mut rows: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for r in readings {
        let col = columns[&(r.identity.sensor_id(), r.sensor_type)];
        rows.entry(r.timestamp)
            .or_insert_with(|| vec![None; columns.len()])[col] = Some(r.value.as_f64());
    }
    let total = rows.len();
    let complete: Vec<(i64, Vec<f64>)> = rows
        .into_iter()
        .filter_map(|(t, cells)| Some((t as i64, cells.into_iter().collect::<Option<Vec<f64>>>()?)))
        .collect();
    let dropped = total - complete.len();
    let n = complete.len();
    let names = columns
        .keys()
        .map(|(id, t)| format!("{}{:03}", t.code(), id))
        .collect();
    let flat: Vec<f64> = complete
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .collect();
    let features = Array2::from_shape_vec((n, columns.len()), flat)
        .map_err(|e| DatasetError::Shape(e.to_string()))?;
    let frame = TimeSeriesFrame::new(
        complete.iter().map(|(t, _)| *t).collect(),
        features,
        names,
        vec![Label::Normal; n],
    )?;
    Ok((frame, dropped))
}

/// Only the normal rows, in order.
pub fn normal_rows(frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame, DatasetError> {
    let rows: Vec<usize> = (0..frame.n_rows())
        .filter(|&i| !frame.labels[i].is_anomalous())
        .collect();
    frame.select_rows(&rows)
}
