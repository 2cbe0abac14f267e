use anoml_core::artifact::ArtifactError;
use anoml_core::codegen::CodegenError;
use anoml_core::config::ConfigError;
use anoml_core::dataset::DatasetError;
use anoml_core::detect::DetectError;
use anoml_core::metrics::MetricsError;
use anoml_core::preprocess::PreprocessError;
use anoml_core::scenario::ScenarioError;
use anoml_core::transport_sim::{SimError, TopologyError};
use anoml_core::wire_format::WireError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input data, config or model; exit 2.
    #[error("{0}")]
    Validation(String),
    /// I/O, network or service failure; exit 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn to_json(&self) -> String {
        let class = match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        };
        serde_json::json!({ "error": class, "message": self.to_string() }).to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime(e)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) => runtime(e),
            _ => validation(e),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Io(_) => runtime(e),
            _ => validation(e),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => runtime(e),
            _ => validation(e),
        }
    }
}

impl From<CodegenError> for CliError {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::Io(_) => runtime(e),
            _ => validation(e),
        }
    }
}

impl From<Vec<TopologyError>> for CliError {
    fn from(errs: Vec<TopologyError>) -> Self {
        validation(
            errs.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        )
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                validation(e)
            }
        })*
    };
}

validation_from!(
    DetectError,
    PreprocessError,
    MetricsError,
    ScenarioError,
    SimError,
    WireError
);
