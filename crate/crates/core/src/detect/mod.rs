//! Unsupervised detectors over flattened window vectors.
//!
//! Every detector scores with "higher = more anomalous" and labels a vector
//! anomalous iff its score is strictly above the detector's threshold:
//! 0.5 for the isolation forest, 0 for the one-class SVM and the 0.99
//! training-error quantile for the autoencoder.

mod autoencoder;
mod bytes;
mod isolation_forest;
mod ocsvm;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Label;

pub use autoencoder::{
    ae_fit, ae_score, AutoencoderModel, AutoencoderParams, DenseLayer, LayerGradient,
};
pub use isolation_forest::{
    average_path_length, if_fit, if_score, score_from_path_length, IsolationForestModel,
    IsolationForestParams, IsolationTree, Node, EULER_GAMMA,
};
pub use ocsvm::{
    ocsvm_decision, ocsvm_fit, FeatureMap, OcsvmParams, OneClassSvmModel, RandomFourierParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("need at least {needed} training samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("nu must lie in (0, 1), got {0}")]
    InvalidNu(f64),
    #[error("bad autoencoder architecture: {0}")]
    BadArchitecture(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training data contains non-finite values")]
    NonFiniteInput,
    #[error("malformed model payload: {0}")]
    MalformedPayload(String),
    #[error("unknown detector tag {0}")]
    UnknownDetectorTag(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    IsolationForest,
    OneClassSvm,
    Autoencoder,
}

impl DetectorKind {
    /// Tag byte in the model container.
    pub fn tag(self) -> u8 {
        match self {
            DetectorKind::IsolationForest => 1,
            DetectorKind::OneClassSvm => 2,
            DetectorKind::Autoencoder => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, DetectError> {
        match tag {
            1 => Ok(DetectorKind::IsolationForest),
            2 => Ok(DetectorKind::OneClassSvm),
            3 => Ok(DetectorKind::Autoencoder),
            other => Err(DetectError::UnknownDetectorTag(other)),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            DetectorKind::IsolationForest => "IF",
            DetectorKind::OneClassSvm => "OC-SVM",
            DetectorKind::Autoencoder => "AE",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "if" | "iforest" | "isolation_forest" => Ok(DetectorKind::IsolationForest),
            "ocsvm" | "oc-svm" | "svm" | "one_class_svm" => Ok(DetectorKind::OneClassSvm),
            "ae" | "autoencoder" => Ok(DetectorKind::Autoencoder),
            other => Err(DetectError::InvalidParameter(format!(
                "unknown detector {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub value: f64,
    /// Bounded score (IF in (0, 1], OC-SVM in (-1, 1)); the autoencoder's
    /// reconstruction error is unbounded.
    pub normalized: bool,
}

/// Anomalous iff `score > threshold`; a tie is normal.
pub fn classify(score: f64, threshold: f64) -> Label {
    if score > threshold {
        Label::Anomalous
    } else {
        Label::Normal
    }
}

/// Hyperparameters for any detector, kept with the artifact for retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "snake_case")]
pub enum DetectorConfig {
    IsolationForest(IsolationForestParams),
    OneClassSvm(OcsvmParams),
    Autoencoder(AutoencoderParams),
}

impl DetectorConfig {
    pub fn default_for(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::IsolationForest => {
                DetectorConfig::IsolationForest(IsolationForestParams::default())
            }
            DetectorKind::OneClassSvm => DetectorConfig::OneClassSvm(OcsvmParams::default()),
            DetectorKind::Autoencoder => DetectorConfig::Autoencoder(AutoencoderParams::default()),
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorConfig::IsolationForest(_) => DetectorKind::IsolationForest,
            DetectorConfig::OneClassSvm(_) => DetectorKind::OneClassSvm,
            DetectorConfig::Autoencoder(_) => DetectorKind::Autoencoder,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            DetectorConfig::IsolationForest(p) => p.seed = seed,
            DetectorConfig::OneClassSvm(p) => p.seed = seed,
            DetectorConfig::Autoencoder(p) => p.seed = seed,
        }
        self
    }

    pub fn fit(&self, train: ArrayView2<'_, f64>) -> Result<DetectorModel, DetectError> {
        if train.iter().any(|v| !v.is_finite()) {
            return Err(DetectError::NonFiniteInput);
        }
        Ok(match self {
            DetectorConfig::IsolationForest(p) => {
                let mut m = if_fit(train, p.n_trees, p.subsample_size, p.seed)?;
                if let Some(c) = p.contamination {
                    m.set_contamination(train, c)?;
                }
                DetectorModel::IsolationForest(m)
            }
            DetectorConfig::OneClassSvm(p) => DetectorModel::OneClassSvm(ocsvm_fit(train, p)?),
            DetectorConfig::Autoencoder(p) => DetectorModel::Autoencoder(ae_fit(train, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorModel {
    IsolationForest(IsolationForestModel),
    OneClassSvm(OneClassSvmModel),
    Autoencoder(AutoencoderModel),
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::IsolationForest(_) => DetectorKind::IsolationForest,
            DetectorModel::OneClassSvm(_) => DetectorKind::OneClassSvm,
            DetectorModel::Autoencoder(_) => DetectorKind::Autoencoder,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DetectorModel::IsolationForest(m) => m.n_features(),
            DetectorModel::OneClassSvm(m) => m.n_features(),
            DetectorModel::Autoencoder(m) => m.input_dim(),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            DetectorModel::IsolationForest(m) => m.threshold(),
            DetectorModel::OneClassSvm(_) => 0.0,
            DetectorModel::Autoencoder(m) => m.threshold(),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<AnomalyScore, DetectError> {
        match self {
            DetectorModel::IsolationForest(m) => if_score(m, x),
            DetectorModel::OneClassSvm(m) => ocsvm_decision(m, x),
            DetectorModel::Autoencoder(m) => ae_score(m, x),
        }
    }

    pub fn classify(&self, score: &AnomalyScore) -> Label {
        classify(score.value, self.threshold())
    }

    /// Little-endian detector payload of the model container.
    pub fn to_payload(&self) -> Vec<u8> {
        match self {
            DetectorModel::IsolationForest(m) => m.to_payload(),
            DetectorModel::OneClassSvm(m) => m.to_payload(),
            DetectorModel::Autoencoder(m) => m.to_payload(),
        }
    }

    pub fn from_payload(kind: DetectorKind, payload: &[u8]) -> Result<Self, DetectError> {
        Ok(match kind {
            DetectorKind::IsolationForest => {
                DetectorModel::IsolationForest(IsolationForestModel::from_payload(payload)?)
            }
            DetectorKind::OneClassSvm => {
                DetectorModel::OneClassSvm(OneClassSvmModel::from_payload(payload)?)
            }
            DetectorKind::Autoencoder => {
                DetectorModel::Autoencoder(AutoencoderModel::from_payload(payload)?)
            }
        })
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), DetectError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(DetectError::DimensionMismatch {
            expected,
            actual: x.len(),
        })
    }
}

/// Linear-interpolation quantile (`q` in [0, 1]) of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
