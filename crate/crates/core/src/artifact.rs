//! Model container.
//!
//! ```text
//! "ANML" | version u16 | tag u8 | meta_len u32 | meta (UTF-8 JSON) | payload | crc32 u32
//! ```
//!
//! All integers little-endian. The CRC-32 covers every byte before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detect::{DetectError, DetectorConfig, DetectorKind, DetectorModel};
use crate::preprocess::FittedTransform;

pub const MAGIC: &[u8; 4] = b"ANML";
pub const FORMAT_VERSION: u16 = 1;
const PREFIX_LEN: usize = 4 + 2 + 1 + 4;
const CRC_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("not a model artifact (bad magic)")]
    BadMagic,
    #[error("artifact truncated")]
    Truncated,
    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unknown detector tag {0}")]
    UnknownDetectorTag(u8),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("metadata detector {meta:?} does not match tag {tag:?}")]
    KindMismatch {
        meta: DetectorKind,
        tag: DetectorKind,
    },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub model_id: String,
    pub detector: DetectorConfig,
    pub transform: FittedTransform,
    pub train_fingerprint: String,
    pub format_version: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub metadata: ArtifactMetadata,
    pub model: DetectorModel,
}

impl ModelArtifact {
    pub fn kind(&self) -> DetectorKind {
        self.model.kind()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        let payload = self.model.to_payload();
        let mut out = Vec::with_capacity(PREFIX_LEN + meta.len() + payload.len() + CRC_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.model.kind().tag());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        load_model(&fs::read(path)?)
    }

    pub fn size_kb(&self) -> f64 {
        self.to_bytes().len() as f64 / 1024.0
    }
}

/// Stable id: first 8 bytes of SHA-256 over the detector payload, as hex.
pub fn model_id(model: &DetectorModel) -> String {
    Sha256::digest(model.to_payload())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn package_model(
    model: DetectorModel,
    detector: DetectorConfig,
    transform: FittedTransform,
    train_fingerprint: String,
) -> ModelArtifact {
    ModelArtifact {
        metadata: ArtifactMetadata {
            model_id: model_id(&model),
            detector,
            transform,
            train_fingerprint,
            format_version: FORMAT_VERSION,
        },
        model,
    }
}

/// Checks run in order: magic, version, checksum, detector tag.
pub fn load_model(bytes: &[u8]) -> Result<ModelArtifact, ArtifactError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    if bytes.len() < PREFIX_LEN + CRC_LEN {
        return Err(ArtifactError::Truncated);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(ArtifactError::UnsupportedVersion(version));
    }
    let (body, crc) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ArtifactError::ChecksumMismatch { stored, computed });
    }
    let tag = body[6];
    let kind = DetectorKind::from_tag(tag).map_err(|_| ArtifactError::UnknownDetectorTag(tag))?;
    let meta_len = u32::from_le_bytes(body[7..11].try_into().expect("4 bytes")) as usize;
    let meta_end = PREFIX_LEN
        .checked_add(meta_len)
        .filter(|&e| e <= body.len())
        .ok_or(ArtifactError::Truncated)?;
    let metadata: ArtifactMetadata = serde_json::from_slice(&body[PREFIX_LEN..meta_end])
        .map_err(|e| ArtifactError::Metadata(e.to_string()))?;
    if metadata.detector.kind() != kind {
        return Err(ArtifactError::KindMismatch {
            meta: metadata.detector.kind(),
            tag: kind,
        });
    }
    let model = DetectorModel::from_payload(kind, &body[meta_end..])?;
    Ok(ModelArtifact { metadata, model })
}
