//! Sliding windows and the scaling/reduction (SR) menu.
//!
//! Scalers keep the multivariate shape; reducers collapse each time step's
//! feature vector to a single statistic so a `(n, L, f)` window tensor becomes
//! `(n, L, 1)`. All moments are population moments.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TimeSeriesFrame;
use crate::Label;

pub const DEFAULT_WINDOW_LEN: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("frame has {rows} rows, window needs {window_len}")]
    FrameTooShort { rows: usize, window_len: usize },
    #[error("window length and stride must be >= 1")]
    InvalidWindow,
    #[error("expected {expected} features, got {actual}")]
    FeatureCountMismatch { expected: usize, actual: usize },
    #[error("features {0:?} are constant in the fitting data")]
    DegenerateFeature(Vec<usize>),
    #[error("cannot fit a scaler on empty data")]
    EmptyData,
    #[error("reducer needs at least one feature")]
    EmptyFeatureVector,
    #[error("unknown scaling/reduction {0:?}")]
    UnknownTransform(String),
    #[error("window tensor bytes malformed: {0}")]
    MalformedTensor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    MinMax,
    Standard,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    Average,
    StDev,
    Skew,
    Kurtosis,
    Mad,
}

impl Reducer {
    pub const ALL: [Reducer; 5] = [
        Reducer::Average,
        Reducer::StDev,
        Reducer::Skew,
        Reducer::Kurtosis,
        Reducer::Mad,
    ];
}

/// One entry of the SR menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "method", rename_all = "snake_case")]
pub enum Sr {
    Scale(ScalerKind),
    Reduce(Reducer),
}

impl Sr {
    pub const ALL: [Sr; 8] = [
        Sr::Scale(ScalerKind::None),
        Sr::Scale(ScalerKind::MinMax),
        Sr::Scale(ScalerKind::Standard),
        Sr::Reduce(Reducer::Average),
        Sr::Reduce(Reducer::StDev),
        Sr::Reduce(Reducer::Skew),
        Sr::Reduce(Reducer::Kurtosis),
        Sr::Reduce(Reducer::Mad),
    ];

    /// Table abbreviation: `NS`, `MM`, `SS`, `Average`, `StDev`, ...
    pub fn label(self) -> &'static str {
        match self {
            Sr::Scale(ScalerKind::None) => "NS",
            Sr::Scale(ScalerKind::MinMax) => "MM",
            Sr::Scale(ScalerKind::Standard) => "SS",
            Sr::Reduce(Reducer::Average) => "Average",
            Sr::Reduce(Reducer::StDev) => "StDev",
            Sr::Reduce(Reducer::Skew) => "Skew",
            Sr::Reduce(Reducer::Kurtosis) => "Kurtosis",
            Sr::Reduce(Reducer::Mad) => "MAD",
        }
    }
}

impl fmt::Display for Sr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sr {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" | "ns" => Sr::Scale(ScalerKind::None),
            "minmax" | "mm" => Sr::Scale(ScalerKind::MinMax),
            "standard" | "ss" => Sr::Scale(ScalerKind::Standard),
            "average" | "avg" | "mean" => Sr::Reduce(Reducer::Average),
            "stdev" | "std" => Sr::Reduce(Reducer::StDev),
            "skew" => Sr::Reduce(Reducer::Skew),
            "kurtosis" | "kurt" => Sr::Reduce(Reducer::Kurtosis),
            "mad" => Sr::Reduce(Reducer::Mad),
            _ => return Err(PreprocessError::UnknownTransform(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub chain: Vec<String>,
}

/// `n_windows x window_len x n_features` tensor with one label per window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTensor {
    pub data: Array3<f64>,
    pub labels: Vec<Label>,
    pub provenance: Provenance,
}

impl WindowTensor {
    pub fn n_windows(&self) -> usize {
        self.data.dim().0
    }

    pub fn window_len(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_features(&self) -> usize {
        self.data.dim().2
    }

    /// Window `i` flattened row-major into a detector input vector.
    /// Window `i` as one vector per time step.
    pub fn window_rows(&self, i: usize) -> Vec<Vec<f64>> {
        self.data
            .index_axis(Axis(0), i)
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn flat_window(&self, i: usize) -> Vec<f64> {
        self.data.index_axis(Axis(0), i).iter().copied().collect()
    }

    /// All windows as an `n_windows x (window_len * n_features)` matrix.
    pub fn flatten(&self) -> Array2<f64> {
        let (n, l, f) = self.data.dim();
        let flat: Vec<f64> = self.data.iter().copied().collect();
        Array2::from_shape_vec((n, l * f), flat).expect("contiguous window tensor")
    }

    /// Flat binary layout: three little-endian u64 dims, then row-major f64s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, l, f) = self.data.dim();
        let mut out = Vec::with_capacity(24 + 8 * n * l * f);
        for d in [n, l, f] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in self.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`WindowTensor::to_bytes`]; labels and provenance are not
    /// part of the layout.
    pub fn data_from_bytes(bytes: &[u8]) -> Result<Array3<f64>, PreprocessError> {
        let malformed = |m: &str| PreprocessError::MalformedTensor(m.to_string());
        if bytes.len() < 24 {
            return Err(malformed("header shorter than 24 bytes"));
        }
        let dim = |i: usize| {
            u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes")) as usize
        };
        let (n, l, f) = (dim(0), dim(1), dim(2));
        let count = n
            .checked_mul(l)
            .and_then(|x| x.checked_mul(f))
            .ok_or_else(|| malformed("dimension overflow"))?;
        if bytes.len() - 24 != count.saturating_mul(8) {
            return Err(malformed("body length does not match dims"));
        }
        let body = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Array3::from_shape_vec((n, l, f), body).map_err(|e| malformed(&e.to_string()))
    }
}

/// Stride-`stride` windows over consecutive rows; a window is anomalous iff
/// any row it covers is.
pub fn make_windows(
    frame: &TimeSeriesFrame,
    window_len: usize,
    stride: usize,
) -> Result<WindowTensor, PreprocessError> {
    windows_of(
        frame.features().view(),
        frame.labels(),
        window_len,
        stride,
        Provenance {
            source: frame.fingerprint(),
            chain: Vec::new(),
        },
    )
}

fn windows_of(
    rows: ArrayView2<'_, f64>,
    labels: &[Label],
    window_len: usize,
    stride: usize,
    provenance: Provenance,
) -> Result<WindowTensor, PreprocessError> {
    if window_len == 0 || stride == 0 {
        return Err(PreprocessError::InvalidWindow);
    }
    let n_rows = rows.nrows();
    if n_rows < window_len {
        return Err(PreprocessError::FrameTooShort {
            rows: n_rows,
            window_len,
        });
    }
    let n_windows = (n_rows - window_len) / stride + 1;
    let n_features = rows.ncols();
    let mut data = Array3::zeros((n_windows, window_len, n_features));
    let mut window_labels = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let start = w * stride;
        data.index_axis_mut(Axis(0), w)
            .assign(&rows.slice(s![start..start + window_len, ..]));
        let anomalous = labels[start..start + window_len]
            .iter()
            .any(|l| l.is_anomalous());
        window_labels.push(if anomalous {
            Label::Anomalous
        } else {
            Label::Normal
        });
    }
    Ok(WindowTensor {
        data,
        labels: window_labels,
        provenance,
    })
}

/// Per-feature statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    /// `min` for MinMax, `mean` for Standard.
    pub location: Vec<f64>,
    /// `max - min` for MinMax, population std for Standard.
    pub spread: Vec<f64>,
    /// Features with zero spread; they scale to 0.
    pub degenerate: Vec<usize>,
    n_features: usize,
}

impl ScalerParams {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Error listing degenerate features, for callers that refuse them.
    pub fn require_non_degenerate(&self) -> Result<(), PreprocessError> {
        if self.degenerate.is_empty() {
            Ok(())
        } else {
            Err(PreprocessError::DegenerateFeature(self.degenerate.clone()))
        }
    }
}

pub fn fit_scaler(
    kind: ScalerKind,
    train: ArrayView2<'_, f64>,
) -> Result<ScalerParams, PreprocessError> {
    let (n, f) = train.dim();
    if n == 0 || f == 0 {
        return Err(PreprocessError::EmptyData);
    }
    let mut location = vec![0.0; f];
    let mut spread = vec![1.0; f];
    match kind {
        ScalerKind::None => {}
        ScalerKind::MinMax => {
            for (j, col) in train.axis_iter(Axis(1)).enumerate() {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                location[j] = lo;
                spread[j] = hi - lo;
            }
        }
        ScalerKind::Standard => {
            for (j, col) in train.axis_iter(Axis(1)).enumerate() {
                let m = mean(col.iter().copied(), n);
                let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
                location[j] = m;
                spread[j] = if all_equal(col.iter().copied()) {
                    0.0
                } else {
                    var.sqrt()
                };
            }
        }
    }
    let degenerate = spread
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0.0)
        .map(|(j, _)| j)
        .collect();
    Ok(ScalerParams {
        kind,
        location,
        spread,
        degenerate,
        n_features: f,
    })
}

pub fn apply_scaler(
    params: &ScalerParams,
    features: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, PreprocessError> {
    if features.ncols() != params.n_features {
        return Err(PreprocessError::FeatureCountMismatch {
            expected: params.n_features,
            actual: features.ncols(),
        });
    }
    let mut out = features.to_owned();
    if params.kind == ScalerKind::None {
        return Ok(out);
    }
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (loc, spread) = (params.location[j], params.spread[j]);
        if spread == 0.0 {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| (x - loc) / spread);
        }
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

fn all_equal(mut values: impl Iterator<Item = f64>) -> bool {
    match values.next() {
        Some(first) => values.all(|v| v == first),
        None => true,
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Collapse one feature vector to a statistic.
pub fn reduce_vector(
    values: ArrayView1<'_, f64>,
    reducer: Reducer,
) -> Result<f64, PreprocessError> {
    let n = values.len();
    if n == 0 {
        return Err(PreprocessError::EmptyFeatureVector);
    }
    let m = mean(values.iter().copied(), n);
    let central = |p: i32| values.iter().map(|x| (x - m).powi(p)).sum::<f64>() / n as f64;
    let constant = all_equal(values.iter().copied());
    Ok(match reducer {
        Reducer::Average => m,
        Reducer::StDev => {
            if constant {
                0.0
            } else {
                central(2).sqrt()
            }
        }
        Reducer::Skew => {
            if constant {
                0.0
            } else {
                central(3) / central(2).powf(1.5)
            }
        }
        Reducer::Kurtosis => {
            if constant {
                0.0
            } else {
                central(4) / central(2).powi(2) - 3.0
            }
        }
        Reducer::Mad => {
            let mut sorted: Vec<f64> = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let med = median(&sorted);
            let mut dev: Vec<f64> = sorted.iter().map(|x| (x - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            median(&dev)
        }
    })
}

/// Per-time-step reduction of a `rows x n_features` block to `rows x 1`.
pub fn reduce(
    block: ArrayView2<'_, f64>,
    reducer: Reducer,
) -> Result<Array2<f64>, PreprocessError> {
    let mut out = Array2::zeros((block.nrows(), 1));
    for (i, row) in block.axis_iter(Axis(0)).enumerate() {
        out[[i, 0]] = reduce_vector(row, reducer)?;
    }
    Ok(out)
}

/// Reduce every window of a tensor, keeping the time axis.
pub fn reduce_windows(
    tensor: &WindowTensor,
    reducer: Reducer,
) -> Result<WindowTensor, PreprocessError> {
    let (n, l, _) = tensor.data.dim();
    let mut data = Array3::zeros((n, l, 1));
    for w in 0..n {
        let reduced = reduce(tensor.data.index_axis(Axis(0), w), reducer)?;
        data.index_axis_mut(Axis(0), w).assign(&reduced);
    }
    let mut provenance = tensor.provenance.clone();
    provenance
        .chain
        .push(Sr::Reduce(reducer).label().to_string());
    Ok(WindowTensor {
        data,
        labels: tensor.labels.clone(),
        provenance,
    })
}

/// An SR choice with its training-time statistics, applied identically at
/// every tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub sr: Sr,
    pub window_len: usize,
    /// Raw feature count expected on input.
    pub n_features: usize,
    pub scaler: Option<ScalerParams>,
}

impl FittedTransform {
    pub fn fit(
        sr: Sr,
        train: &TimeSeriesFrame,
        window_len: usize,
    ) -> Result<Self, PreprocessError> {
        if window_len == 0 {
            return Err(PreprocessError::InvalidWindow);
        }
        let scaler = match sr {
            Sr::Scale(kind) => Some(fit_scaler(kind, train.features().view())?),
            Sr::Reduce(_) => None,
        };
        Ok(Self {
            sr,
            window_len,
            n_features: train.n_features(),
            scaler,
        })
    }

    /// Feature count after the transform (1 for reducers).
    pub fn output_features(&self) -> usize {
        match self.sr {
            Sr::Scale(_) => self.n_features,
            Sr::Reduce(_) => 1,
        }
    }

    /// Length of a flattened detector input vector.
    pub fn input_dim(&self) -> usize {
        self.window_len * self.output_features()
    }

    /// Scale or reduce raw rows.
    pub fn transform_rows(
        &self,
        rows: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>, PreprocessError> {
        if rows.ncols() != self.n_features {
            return Err(PreprocessError::FeatureCountMismatch {
                expected: self.n_features,
                actual: rows.ncols(),
            });
        }
        match (self.sr, &self.scaler) {
            (Sr::Scale(_), Some(params)) => apply_scaler(params, rows),
            (Sr::Reduce(r), _) => reduce(rows, r),
            (Sr::Scale(_), None) => Ok(rows.to_owned()),
        }
    }

    /// Transform then window a frame.
    pub fn windows(&self, frame: &TimeSeriesFrame) -> Result<WindowTensor, PreprocessError> {
        let rows = self.transform_rows(frame.features().view())?;
        windows_of(
            rows.view(),
            frame.labels(),
            self.window_len,
            1,
            Provenance {
                source: frame.fingerprint(),
                chain: vec![self.sr.label().to_string()],
            },
        )
    }

    /// Transform one raw `window_len x n_features` window into a flat
    /// detector input.
    pub fn flat_input(&self, window: ArrayView2<'_, f64>) -> Result<Vec<f64>, PreprocessError> {
        if window.nrows() != self.window_len {
            return Err(PreprocessError::FrameTooShort {
                rows: window.nrows(),
                window_len: self.window_len,
            });
        }
        Ok(self.transform_rows(window)?.iter().copied().collect())
    }

    /// [`Self::flat_input`] over a row-major `window_len x n_features` slice.
    pub fn flat_input_slice(&self, window: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        if window.len() != self.window_len * self.n_features {
            return Err(PreprocessError::FeatureCountMismatch {
                expected: self.window_len * self.n_features,
                actual: window.len(),
            });
        }
        let view = ArrayView2::from_shape((self.window_len, self.n_features), window)
            .map_err(|e| PreprocessError::MalformedTensor(e.to_string()))?;
        self.flat_input(view)
    }
}
