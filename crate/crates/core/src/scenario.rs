//! Placement scenarios: replay a labeled frame as sensor messages through a
//! simulated edge → fog → cloud path and run the packaged detector at one
//! tier.
//!
//! Readings pass through the text codec at the edge, so every tier sees the
//! same two-decimal values and the metric block does not depend on where
//! detection runs. Only the timing fields do.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ModelArtifact;
use crate::dataset::{DatasetError, TimeSeriesFrame};
use crate::detect::{DetectError, DetectorKind};
use crate::metrics::{self, ConfusionCounts, MetricsError};
use crate::preprocess::PreprocessError;
use crate::transport_sim::{self, LatencyStats, Packet, SimError, Tier, Topology};
use crate::wire_format::{
    self, NodeIdentity, SensorReading, SensorType, SensorValue, WireError, MAX_SENSOR_ID,
};
use crate::Label;

pub type Placement = Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardPolicy {
    /// Upstream tiers receive the raw sensor messages.
    #[default]
    RawOnly,
    /// Upstream tiers receive the 0/1 label per window.
    ProcessedBinary,
    /// Upstream tiers receive the anomaly score per window.
    ProcessedScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub placement: Placement,
    #[serde(default)]
    pub forward_policy: ForwardPolicy,
    /// Source node; defaults to the first edge node of the topology.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_node: Option<String>,
    /// Restrict the edge tier to the autoencoder, as on real microcontrollers.
    #[serde(default)]
    pub realistic_edge: bool,
}

impl ScenarioSpec {
    pub fn new(placement: Placement) -> Self {
        Self {
            placement,
            forward_policy: ForwardPolicy::RawOnly,
            edge_node: None,
            realistic_edge: false,
        }
    }

    /// Cloud detection leaves nothing to process below it.
    pub fn effective_policy(&self) -> ForwardPolicy {
        match self.placement {
            Tier::Cloud => ForwardPolicy::RawOnly,
            _ => self.forward_policy,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("placement {placement} unsupported: {reason}")]
    PlacementUnsupported { placement: Tier, reason: String },
    #[error("frame has {0} features; at most {MAX_SENSOR_ID} fit the sensor id field")]
    TooManyFeatures(usize),
    #[error("no complete rows reached the detection tier")]
    NothingDelivered,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Detection quality; identical across placements for the same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub windows: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTiming {
    /// Per-message simulated link latency from the edge to the detection
    /// tier; `None` at the edge.
    pub path_latency_ms: Option<LatencyStats>,
    /// Per-result latency from the detection tier to the cloud when results
    /// are forwarded upstream.
    pub upstream_latency_ms: Option<LatencyStats>,
    /// Measured wall-clock inference time per window.
    pub inference_ms: f64,
    /// Measured wall-clock transform time for the whole replay.
    pub scaling_reduction_s: f64,
    /// Mean path latency plus mean inference time.
    pub end_to_end_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub placement: Placement,
    pub forward_policy: ForwardPolicy,
    pub detector: DetectorKind,
    pub model_id: String,
    pub path: Vec<String>,
    pub rows_sent: usize,
    pub rows_received: usize,
    pub messages_sent: usize,
    pub messages_delivered: usize,
    pub metrics: MetricBlock,
    pub timing: ScenarioTiming,
}

impl ScenarioReport {
    /// Canonical JSON of the metric block.
    pub fn metric_block_json(&self) -> String {
        serde_json::to_string(&self.metrics).expect("metric block serializes")
    }

    /// The report with wall-clock measurements zeroed; a pure function of
    /// the inputs and the seed.
    pub fn without_wall_clock(&self) -> Self {
        let mut r = self.clone();
        r.timing.inference_ms = 0.0;
        r.timing.scaling_reduction_s = 0.0;
        r.timing.end_to_end_ms = r.timing.path_latency_ms.map_or(0.0, |s| s.mean);
        r
    }
}

/// Edge node, then its first fog neighbour, then that fog's first cloud
/// neighbour, truncated at the placement tier.
fn detection_path(topo: &Topology, spec: &ScenarioSpec) -> Result<Vec<String>, ScenarioError> {
    let unsupported = |reason: String| ScenarioError::PlacementUnsupported {
        placement: spec.placement,
        reason,
    };
    let edge = match &spec.edge_node {
        Some(id) => {
            let i = topo
                .node_index(id)
                .ok_or_else(|| unsupported(format!("unknown edge node {id:?}")))?;
            if topo.nodes()[i].tier != Tier::Edge {
                return Err(unsupported(format!("{id:?} is not an edge node")));
            }
            id.clone()
        }
        None => topo
            .nodes_in_tier(Tier::Edge)
            .next()
            .map(|n| n.id.clone())
            .ok_or_else(|| unsupported("topology has no edge node".into()))?,
    };
    let mut path = vec![edge];
    for next in [Tier::Fog, Tier::Cloud]
        .into_iter()
        .take(tier_depth(spec.placement))
    {
        let here = path.last().expect("non-empty");
        let hop = next_hop(topo, here, next)
            .ok_or_else(|| unsupported(format!("no {next} node reachable from {here:?}")))?;
        path.push(hop);
    }
    Ok(path)
}

fn tier_depth(t: Tier) -> usize {
    match t {
        Tier::Edge => 0,
        Tier::Fog => 1,
        Tier::Cloud => 2,
    }
}

fn next_hop(topo: &Topology, from: &str, tier: Tier) -> Option<String> {
    topo.links_from(from)
        .map(|l| topo.node_id(l.to))
        .find(|id| topo.nodes()[topo.node_index(id).expect("linked node")].tier == tier)
        .map(str::to_string)
}

/// The detection node followed by every tier above it that is reachable.
fn upstream_path(topo: &Topology, path: &[String], placement: Tier) -> Vec<String> {
    let mut up = vec![path.last().expect("non-empty").clone()];
    for next in [Tier::Fog, Tier::Cloud]
        .into_iter()
        .skip(tier_depth(placement))
    {
        match next_hop(topo, up.last().expect("non-empty"), next) {
            Some(id) => up.push(id),
            None => break,
        }
    }
    up
}

fn sensor_type_for(name: &str, f: usize) -> SensorType {
    SensorType::from_column_name(name).unwrap_or(SensorType::ALL[f % SensorType::ALL.len()])
}

/// Simulate store-and-forward along `hops`; returns per-packet delivery time
/// and summed link latency, `None` if dropped on any hop.
fn relay(
    topo: &Topology,
    hops: &[String],
    packets: Vec<Packet>,
    seed: u64,
) -> Result<Vec<Option<(f64, f64)>>, ScenarioError> {
    let n = packets.len();
    let mut state: Vec<Option<(f64, f64)>> = packets
        .iter()
        .map(|p| Some((p.send_time_ms, 0.0)))
        .collect();
    let payloads: Vec<Vec<u8>> = packets.into_iter().map(|p| p.payload).collect();
    for (h, pair) in hops.windows(2).enumerate() {
        let alive: Vec<usize> = (0..n).filter(|&i| state[i].is_some()).collect();
        let batch: Vec<Packet> = alive
            .iter()
            .map(|&i| {
                Packet::new(
                    &pair[0],
                    &pair[1],
                    state[i].expect("alive").0,
                    payloads[i].clone(),
                )
            })
            .collect();
        if batch.is_empty() {
            break;
        }
        let trace = transport_sim::run(topo, &batch, seed.wrapping_add(h as u64))?;
        for e in &trace.events {
            let i = alive[e.packet_index];
            state[i] = match (e.deliver_time_ms(), e.latency_ms(), state[i]) {
                (Some(t), Some(l), Some((_, acc))) => Some((t, acc + l)),
                _ => None,
            };
        }
    }
    Ok(state)
}

pub fn run_scenario(
    topo: &Topology,
    spec: &ScenarioSpec,
    artifact: &ModelArtifact,
    frame: &TimeSeriesFrame,
    seed: u64,
) -> Result<ScenarioReport, ScenarioError> {
    let kind = artifact.kind();
    if spec.realistic_edge && spec.placement == Tier::Edge && kind != DetectorKind::Autoencoder {
        return Err(ScenarioError::PlacementUnsupported {
            placement: Tier::Edge,
            reason: format!(
                "{} is not deployable on edge microcontrollers",
                kind.short_name()
            ),
        });
    }
    let n_features = frame.n_features();
    if n_features > usize::from(MAX_SENSOR_ID) {
        return Err(ScenarioError::TooManyFeatures(n_features));
    }
    let path = detection_path(topo, spec)?;
    let policy = spec.effective_policy();

    // Edge: one message per (row, feature).
    let t0 = frame.timestamps().first().copied().unwrap_or(0);
    let mut packets = Vec::with_capacity(frame.n_rows() * n_features);
    for r in 0..frame.n_rows() {
        let offset = (frame.timestamps()[r] - t0) as u64;
        for f in 0..n_features {
            let reading = SensorReading::new(
                NodeIdentity::new(1, 1, (f + 1) as u16)?,
                sensor_type_for(&frame.feature_names()[f], f),
                SensorValue::float(frame.features()[[r, f]])?,
                offset,
            )?;
            let dest = path.get(1).unwrap_or(&path[0]);
            packets.push(Packet::new(
                &path[0],
                dest,
                offset as f64,
                wire_format::encode_text(&reading).into_bytes(),
            ));
        }
    }
    let messages_sent = packets.len();
    let lines: Vec<Vec<u8>> = packets.iter().map(|p| p.payload.clone()).collect();
    let send_times: Vec<u64> = (0..frame.n_rows())
        .flat_map(|r| std::iter::repeat_n((frame.timestamps()[r] - t0) as u64, n_features))
        .collect();
    let delivered = relay(topo, &path, packets, seed)?;

    // Detection tier: reassemble rows by (timestamp, sensor id).
    let mut cells: BTreeMap<(u64, u16), f64> = BTreeMap::new();
    let mut path_latencies = Vec::new();
    for (i, d) in delivered.iter().enumerate() {
        if let Some((_, latency)) = d {
            let text = std::str::from_utf8(&lines[i]).expect("ascii wire message");
            let reading = wire_format::decode_text(text, send_times[i])?;
            cells.insert(
                (reading.timestamp, reading.identity.sensor_id()),
                reading.value.as_f64(),
            );
            path_latencies.push(*latency);
        }
    }
    let messages_delivered = path_latencies.len();
    let mut kept = Vec::new();
    let mut values = Vec::new();
    for r in 0..frame.n_rows() {
        let ts = (frame.timestamps()[r] - t0) as u64;
        let row: Option<Vec<f64>> = (0..n_features)
            .map(|f| cells.get(&(ts, (f + 1) as u16)).copied())
            .collect();
        if let Some(row) = row {
            kept.push(r);
            values.extend(row);
        }
    }
    if kept.is_empty() {
        return Err(ScenarioError::NothingDelivered);
    }
    let received = TimeSeriesFrame::new(
        kept.iter().map(|&r| frame.timestamps()[r]).collect(),
        Array2::from_shape_vec((kept.len(), n_features), values).expect("row-major cells"),
        frame.feature_names().to_vec(),
        kept.iter().map(|&r| frame.labels()[r]).collect(),
    )?;

    let transform = &artifact.metadata.transform;
    let start = Instant::now();
    let windows = transform.windows(&received)?;
    let scaling_reduction_s = start.elapsed().as_secs_f64();
    let flat = windows.flatten();
    let mut scores = Vec::with_capacity(flat.nrows());
    let mut predictions = Vec::with_capacity(flat.nrows());
    let start = Instant::now();
    for row in flat.rows() {
        let s = artifact
            .model
            .score(row.as_slice().expect("standard layout"))?;
        predictions.push(artifact.model.classify(&s));
        scores.push(s.value);
    }
    let inference_ms = start.elapsed().as_secs_f64() * 1e3 / flat.nrows().max(1) as f64;

    let counts = metrics::confusion(&predictions, &windows.labels)?;
    let auc = match metrics::auc(&scores, &windows.labels) {
        Ok(v) => Some(v),
        Err(MetricsError::SingleClass) => None,
        Err(e) => return Err(e.into()),
    };
    let block = MetricBlock {
        windows: flat.nrows(),
        accuracy: metrics::accuracy(&counts),
        precision: metrics::precision(&counts),
        recall: metrics::recall(&counts),
        f1: metrics::f1(&counts),
        auc,
        counts,
    };

    // Results travel on to the cloud when detection ran below it.
    let up = upstream_path(topo, &path, spec.placement);
    let upstream_latency_ms = if policy != ForwardPolicy::RawOnly && up.len() > 1 {
        let window_len = transform.window_len;
        let result_packets: Vec<Packet> = predictions
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(w, (label, score))| {
                let body = match policy {
                    ForwardPolicy::ProcessedBinary => match label {
                        Label::Normal => "0".to_string(),
                        Label::Anomalous => "1".to_string(),
                    },
                    _ => format!("{score:.6}"),
                };
                let ready = (received.timestamps()[w + window_len - 1] - t0) as f64;
                Packet::new(&up[0], &up[1], ready, body.into_bytes())
            })
            .collect();
        let res = relay(topo, &up, result_packets, seed.wrapping_add(1 << 32))?;
        let lat: Vec<f64> = res.iter().flatten().map(|&(_, l)| l).collect();
        (!lat.is_empty())
            .then(|| transport_sim::latency_stats(lat))
            .transpose()?
    } else {
        None
    };

    let path_latency_ms = if path.len() > 1 {
        Some(transport_sim::latency_stats(path_latencies)?)
    } else {
        None
    };
    let end_to_end_ms = path_latency_ms.map_or(0.0, |s| s.mean) + inference_ms;
    Ok(ScenarioReport {
        placement: spec.placement,
        forward_policy: policy,
        detector: kind,
        model_id: artifact.metadata.model_id.clone(),
        path,
        rows_sent: frame.n_rows(),
        rows_received: received.n_rows(),
        messages_sent,
        messages_delivered,
        metrics: block,
        timing: ScenarioTiming {
            path_latency_ms,
            upstream_latency_ms,
            inference_ms,
            scaling_reduction_s,
            end_to_end_ms,
        },
    })
}
