//! One TOML dialect for every tool. Each table is optional; a command reads
//! the tables it needs.
//!
//! ```toml
//! [[topology.nodes]]
//! id = "e1"
//! tier = "edge"
//!
//! [[topology.links]]
//! from = "e1"
//! to = "f1"
//! protocol = "wifi"
//!
//! [workload]
//! from = "e1"
//! to = "f1"
//! packets = 1000
//!
//! [transform]
//! sr = "MM"
//! window_len = 30
//!
//! [detector]
//! detector = "isolation_forest"
//! n_trees = 100
//! subsample_size = 256
//! seed = 0
//!
//! [scenario]
//! placement = "fog"
//! forward_policy = "processed_score"
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codegen::NodeSpec;
use crate::dataset::CsvSchema;
use crate::detect::DetectorConfig;
use crate::preprocess::{Sr, DEFAULT_WINDOW_LEN};
use crate::scenario::ScenarioSpec;
use crate::transport_sim::{TopologySpec, WorkloadSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Parse(String),
    #[error("config lacks a [{0}] table")]
    MissingTable(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    #[serde(serialize_with = "sr_out", deserialize_with = "sr_in")]
    pub sr: Sr,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            sr: Sr::Scale(crate::preprocess::ScalerKind::MinMax),
            window_len: DEFAULT_WINDOW_LEN,
        }
    }
}

fn default_window_len() -> usize {
    DEFAULT_WINDOW_LEN
}

fn sr_out<S: Serializer>(sr: &Sr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(sr.label())
}

fn sr_in<'de, D: Deserializer<'de>>(d: D) -> Result<Sr, D::Error> {
    let text = String::deserialize(d)?;
    text.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn require_topology(&self) -> Result<&TopologySpec, ConfigError> {
        self.topology
            .as_ref()
            .ok_or(ConfigError::MissingTable("topology"))
    }

    pub fn require_node(&self) -> Result<&NodeSpec, ConfigError> {
        self.node.as_ref().ok_or(ConfigError::MissingTable("node"))
    }
}
