//! Core of a reconfigurable edge/fog/cloud anomaly-detection pipeline.
//!
//! The crate covers the whole data path of a small IoT deployment:
//!
//! - [`wire_format`]: fixed-width sensor message codec (text and BLE buffer form)
//! - [`transport_sim`]: seeded discrete-event simulation of Wi-Fi, Bluetooth
//!   Classic, BLE and Zigbee links between edge, fog and cloud tiers
//! - [`codegen`]: validation of declarative edge-node specs and generation of
//!   transmitter/receiver source bundles
//! - [`dataset`]: labeled CSV ingestion, synthetic data with injected anomalies,
//!   chronological splitting
//! - [`preprocess`]: sliding windows, scalers and per-time-step reducers
//! - [`detect`]: isolation forest, one-class SVM and a dense autoencoder
//! - [`metrics`]: confusion counts, accuracy/precision/recall/F1, rank AUC, timing
//! - [`artifact`] and [`scenario`]: model packaging and placement scenarios that
//!   replay a dataset through the simulated topology

pub mod artifact;
pub mod codegen;
pub mod config;
pub mod dataset;
pub mod detect;
pub mod metrics;
pub mod preprocess;
pub mod scenario;
pub mod transport_sim;
pub mod wire_format;

mod label;

pub use label::Label;
