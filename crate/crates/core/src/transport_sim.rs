//! Seeded discrete-event simulation of edge/fog/cloud links.
//!
//! Each directed link carries a [`LinkModel`]: a protocol, the tier pair it
//! connects, a mean latency, a jitter standard deviation and a drop
//! probability. Per-packet latency is drawn from `Normal(mean, jitter)` and
//! clamped at zero. Defaults come from bench measurements of 1000 packets per
//! protocol with the devices side by side.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default jitter as a fraction of the mean latency.
pub const DEFAULT_JITTER_FRACTION: f64 = 0.1;

/// A Bluetooth Classic piconet master serves at most seven peers.
pub const BT_CLASSIC_MAX_PEERS: usize = 7;

/// A BLE central keeps at most twenty parallel connections.
pub const BLE_MAX_PERIPHERALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[serde(alias = "wi-fi")]
    Wifi,
    BluetoothClassic,
    Ble,
    Zigbee,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Wifi,
        Protocol::BluetoothClassic,
        Protocol::Ble,
        Protocol::Zigbee,
    ];

    /// Two-letter identifier used in configuration (`WF`, `BC`, `BL`, `ZB`).
    pub fn code(self) -> &'static str {
        match self {
            Protocol::Wifi => "WF",
            Protocol::BluetoothClassic => "BC",
            Protocol::Ble => "BL",
            Protocol::Zigbee => "ZB",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Protocol::Wifi => "wifi",
            Protocol::BluetoothClassic => "bluetooth_classic",
            Protocol::Ble => "ble",
            Protocol::Zigbee => "zigbee",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Fog,
    Cloud,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Edge => "edge",
            Tier::Fog => "fog",
            Tier::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TierPair {
    EdgeEdge,
    EdgeFog,
    FogFog,
    FogCloud,
}

impl TierPair {
    /// Tier pair of a link in either direction; `None` for pairs that are
    /// never linked directly (edge-cloud, cloud-cloud).
    pub fn between(a: Tier, b: Tier) -> Option<TierPair> {
        use Tier::*;
        match (a, b) {
            (Edge, Edge) => Some(TierPair::EdgeEdge),
            (Edge, Fog) | (Fog, Edge) => Some(TierPair::EdgeFog),
            (Fog, Fog) => Some(TierPair::FogFog),
            (Fog, Cloud) | (Cloud, Fog) => Some(TierPair::FogCloud),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{protocol} has no {tier_pair:?} link")]
    UnsupportedPair {
        protocol: Protocol,
        tier_pair: TierPair,
    },
    #[error("invalid link parameter: {0}")]
    InvalidLink(String),
    #[error("no link from {from:?} to {to:?}")]
    UnknownLink { from: String, to: String },
    #[error("packet {index} has invalid send time {send_time}")]
    InvalidSendTime { index: usize, send_time: f64 },
    #[error("trace contains no delivered packets")]
    EmptyTrace,
    #[error("trace export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub protocol: Protocol,
    pub tier_pair: TierPair,
    pub mean_latency_ms: f64,
    pub jitter_std_ms: f64,
    pub drop_probability: f64,
}

impl LinkModel {
    pub fn new(
        protocol: Protocol,
        tier_pair: TierPair,
        mean_latency_ms: f64,
        jitter_std_ms: f64,
        drop_probability: f64,
    ) -> Result<Self, SimError> {
        if tier_pair == TierPair::FogCloud && protocol != Protocol::Wifi {
            return Err(SimError::UnsupportedPair {
                protocol,
                tier_pair,
            });
        }
        if !(mean_latency_ms.is_finite() && mean_latency_ms > 0.0) {
            return Err(SimError::InvalidLink(format!(
                "mean latency must be > 0, got {mean_latency_ms}"
            )));
        }
        if !(jitter_std_ms.is_finite() && jitter_std_ms >= 0.0) {
            return Err(SimError::InvalidLink(format!(
                "jitter must be >= 0, got {jitter_std_ms}"
            )));
        }
        if !(0.0..=1.0).contains(&drop_probability) {
            return Err(SimError::InvalidLink(format!(
                "drop probability must lie in [0, 1], got {drop_probability}"
            )));
        }
        Ok(Self {
            protocol,
            tier_pair,
            mean_latency_ms,
            jitter_std_ms,
            drop_probability,
        })
    }

    pub fn with_jitter(mut self, jitter_std_ms: f64) -> Result<Self, SimError> {
        self = Self::new(
            self.protocol,
            self.tier_pair,
            self.mean_latency_ms,
            jitter_std_ms,
            self.drop_probability,
        )?;
        Ok(self)
    }
}

/// Measured mean latency in milliseconds, `None` where the protocol has no
/// such hop.
pub fn measured_mean_latency(protocol: Protocol, tier_pair: TierPair) -> Option<f64> {
    use Protocol::*;
    use TierPair::*;
    match (protocol, tier_pair) {
        (Wifi, EdgeEdge) => Some(18.24),
        (Wifi, EdgeFog) => Some(14.566),
        (Wifi, FogFog) => Some(17.25),
        (Wifi, FogCloud) => Some(21.23),
        (BluetoothClassic, EdgeEdge) => Some(195.13),
        (BluetoothClassic, EdgeFog) => Some(171.15),
        (BluetoothClassic, FogFog) => Some(187.15),
        (Ble, EdgeEdge) => Some(11.23),
        (Ble, EdgeFog) => Some(13.45),
        (Ble, FogFog) => Some(13.21),
        (Zigbee, EdgeEdge) => Some(18.56),
        (Zigbee, EdgeFog) => Some(16.66),
        (Zigbee, FogFog) => Some(14.56),
        (_, FogCloud) => None,
    }
}

pub fn default_link(protocol: Protocol, tier_pair: TierPair) -> Result<LinkModel, SimError> {
    let mean = measured_mean_latency(protocol, tier_pair).ok_or(SimError::UnsupportedPair {
        protocol,
        tier_pair,
    })?;
    LinkModel::new(
        protocol,
        tier_pair,
        mean,
        DEFAULT_JITTER_FRACTION * mean,
        0.0,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyNode {
    pub id: String,
    pub tier: Tier,
}

/// Declared link; unset latency parameters fall back to [`default_link`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_std_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_probability: Option<f64>,
}

impl LinkSpec {
    pub fn new(from: &str, to: &str, protocol: Protocol) -> Self {
        Self {
            from: from.to_string(),
            to: to.to_string(),
            protocol,
            mean_latency_ms: None,
            jitter_std_ms: None,
            drop_probability: None,
        }
    }

    pub fn with_jitter(mut self, jitter_std_ms: f64) -> Self {
        self.jitter_std_ms = Some(jitter_std_ms);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    #[serde(default)]
    pub nodes: Vec<TopologyNode>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

impl TopologySpec {
    pub fn node(mut self, id: &str, tier: Tier) -> Self {
        self.nodes.push(TopologyNode {
            id: id.to_string(),
            tier,
        });
        self
    }

    pub fn link(mut self, link: LinkSpec) -> Self {
        self.links.push(link);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("link references unknown node {0:?}")]
    UnknownNode(String),
    #[error("duplicate link {from:?} -> {to:?}")]
    DuplicateLink { from: String, to: String },
    #[error("{protocol} cannot link a {from_tier} node to a {to_tier} node")]
    UnsupportedPair {
        protocol: Protocol,
        from_tier: Tier,
        to_tier: Tier,
    },
    #[error("fog-cloud link {from:?} -> {to:?} uses {protocol}; only wifi reaches the cloud")]
    FogCloudRequiresWiFi {
        from: String,
        to: String,
        protocol: Protocol,
    },
    #[error("bluetooth classic hub {hub:?} has {peers} peers (max {BT_CLASSIC_MAX_PEERS})")]
    BtClassicFanoutExceeded { hub: String, peers: usize },
    #[error("BLE central {central:?} has {peers} peripherals (max {BLE_MAX_PERIPHERALS})")]
    BlePeripheralLimitExceeded { central: String, peers: usize },
    #[error("link {from:?} -> {to:?}: {reason}")]
    InvalidLink {
        from: String,
        to: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub model: LinkModel,
}

/// Validated graph of tier-tagged nodes and directed links.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    nodes: Vec<TopologyNode>,
    node_index: HashMap<String, usize>,
    links: Vec<Link>,
    link_index: HashMap<(usize, usize), usize>,
}

impl Topology {
    pub fn nodes(&self) -> &[TopologyNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_id(&self, index: usize) -> &str {
        &self.nodes[index].id
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link(&self, from: &str, to: &str) -> Option<&Link> {
        let key = (self.node_index(from)?, self.node_index(to)?);
        self.link_index.get(&key).map(|&i| &self.links[i])
    }

    /// Outgoing links of a node, in declaration order.
    pub fn links_from(&self, id: &str) -> impl Iterator<Item = &Link> {
        let idx = self.node_index(id);
        self.links.iter().filter(move |l| Some(l.from) == idx)
    }

    pub fn nodes_in_tier(&self, tier: Tier) -> impl Iterator<Item = &TopologyNode> {
        self.nodes.iter().filter(move |n| n.tier == tier)
    }
}

/// Validate a declared topology, reporting every violated constraint.
pub fn build_topology(spec: &TopologySpec) -> Result<Topology, Vec<TopologyError>> {
    let mut errors = Vec::new();
    let mut topo = Topology::default();

    for node in &spec.nodes {
        if topo.node_index.contains_key(&node.id) {
            errors.push(TopologyError::DuplicateNode(node.id.clone()));
            continue;
        }
        topo.node_index.insert(node.id.clone(), topo.nodes.len());
        topo.nodes.push(node.clone());
    }

    let mut bt_peers: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    let mut ble_peers: HashMap<usize, BTreeSet<usize>> = HashMap::new();

    for link in &spec.links {
        let (from, to) = match (topo.node_index(&link.from), topo.node_index(&link.to)) {
            (Some(f), Some(t)) => (f, t),
            (f, t) => {
                if f.is_none() {
                    errors.push(TopologyError::UnknownNode(link.from.clone()));
                }
                if t.is_none() {
                    errors.push(TopologyError::UnknownNode(link.to.clone()));
                }
                continue;
            }
        };
        let (from_tier, to_tier) = (topo.nodes[from].tier, topo.nodes[to].tier);
        let Some(tier_pair) = TierPair::between(from_tier, to_tier) else {
            errors.push(TopologyError::UnsupportedPair {
                protocol: link.protocol,
                from_tier,
                to_tier,
            });
            continue;
        };
        if tier_pair == TierPair::FogCloud && link.protocol != Protocol::Wifi {
            errors.push(TopologyError::FogCloudRequiresWiFi {
                from: link.from.clone(),
                to: link.to.clone(),
                protocol: link.protocol,
            });
            continue;
        }
        if topo.link_index.contains_key(&(from, to)) {
            errors.push(TopologyError::DuplicateLink {
                from: link.from.clone(),
                to: link.to.clone(),
            });
            continue;
        }
        let base = measured_mean_latency(link.protocol, tier_pair);
        let mean = link.mean_latency_ms.or(base);
        let model = match mean {
            Some(mean) => LinkModel::new(
                link.protocol,
                tier_pair,
                mean,
                link.jitter_std_ms.unwrap_or(DEFAULT_JITTER_FRACTION * mean),
                link.drop_probability.unwrap_or(0.0),
            ),
            None => Err(SimError::UnsupportedPair {
                protocol: link.protocol,
                tier_pair,
            }),
        };
        let model = match model {
            Ok(m) => m,
            Err(e) => {
                errors.push(TopologyError::InvalidLink {
                    from: link.from.clone(),
                    to: link.to.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };

        let peers = match link.protocol {
            Protocol::BluetoothClassic => Some(&mut bt_peers),
            Protocol::Ble => Some(&mut ble_peers),
            _ => None,
        };
        if let Some(peers) = peers {
            peers.entry(from).or_default().insert(to);
            peers.entry(to).or_default().insert(from);
        }

        topo.link_index.insert((from, to), topo.links.len());
        topo.links.push(Link { from, to, model });
    }

    let mut fanout: Vec<_> = bt_peers
        .iter()
        .filter(|(_, p)| p.len() > BT_CLASSIC_MAX_PEERS)
        .map(|(&n, p)| (n, p.len()))
        .collect();
    fanout.sort();
    errors.extend(
        fanout
            .into_iter()
            .map(|(n, peers)| TopologyError::BtClassicFanoutExceeded {
                hub: topo.nodes[n].id.clone(),
                peers,
            }),
    );
    let mut fanout: Vec<_> = ble_peers
        .iter()
        .filter(|(_, p)| p.len() > BLE_MAX_PERIPHERALS)
        .map(|(&n, p)| (n, p.len()))
        .collect();
    fanout.sort();
    errors.extend(
        fanout
            .into_iter()
            .map(|(n, peers)| TopologyError::BlePeripheralLimitExceeded {
                central: topo.nodes[n].id.clone(),
                peers,
            }),
    );

    if errors.is_empty() {
        Ok(topo)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub payload: Vec<u8>,
    pub source: String,
    pub destination: String,
    pub send_time_ms: f64,
}

impl Packet {
    pub fn new(source: &str, destination: &str, send_time_ms: f64, payload: Vec<u8>) -> Self {
        Self {
            payload,
            source: source.to_string(),
            destination: destination.to_string(),
            send_time_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Delivered {
        deliver_time_ms: f64,
        latency_ms: f64,
    },
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Position of the packet in the submitted workload.
    pub packet_index: usize,
    pub packet: Packet,
    pub outcome: Outcome,
}

impl TraceEvent {
    pub fn latency_ms(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Delivered { latency_ms, .. } => Some(latency_ms),
            Outcome::Dropped => None,
        }
    }

    pub fn deliver_time_ms(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Delivered {
                deliver_time_ms, ..
            } => Some(deliver_time_ms),
            Outcome::Dropped => None,
        }
    }
}

/// Events in the order the simulator produced them: deliveries by delivery
/// time, drops at the instant the packet was sent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn delivered(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.latency_ms().is_some())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "packet_index",
            "source",
            "destination",
            "send_time_ms",
            "deliver_time_ms",
            "latency_ms",
            "status",
            "payload",
        ])
        .map_err(|e| SimError::Export(e.to_string()))?;
        for e in &self.events {
            let (deliver, latency, status) = match e.outcome {
                Outcome::Delivered {
                    deliver_time_ms,
                    latency_ms,
                } => (
                    deliver_time_ms.to_string(),
                    latency_ms.to_string(),
                    "delivered",
                ),
                Outcome::Dropped => (String::new(), String::new(), "dropped"),
            };
            w.write_record([
                e.packet_index.to_string(),
                e.packet.source.clone(),
                e.packet.destination.clone(),
                e.packet.send_time_ms.to_string(),
                deliver,
                latency,
                status.to_string(),
                String::from_utf8_lossy(&e.packet.payload).into_owned(),
            ])
            .map_err(|e| SimError::Export(e.to_string()))?;
        }
        w.flush().map_err(|e| SimError::Export(e.to_string()))
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(|e| SimError::Export(e.to_string()))?;
            out.write_all(b"\n")
                .map_err(|e| SimError::Export(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Send,
    Deliver,
}

#[derive(Debug, Clone, Copy)]
struct QueuedEvent {
    time: f64,
    send_time: f64,
    seq: usize,
    kind: EventKind,
    latency: f64,
}

impl QueuedEvent {
    fn key(&self) -> (f64, f64, usize) {
        (self.time, self.send_time, self.seq)
    }
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueuedEvent {}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedEvent {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(b.2.cmp(&a.2))
    }
}

/// Replay a packet schedule over the topology.
///
/// Every packet must travel a single declared link. Latencies are sampled in
/// send order from a ChaCha8 stream seeded with `seed`, so the trace is a pure
/// function of `(topology, workload, seed)`.
pub fn run(topology: &Topology, workload: &[Packet], seed: u64) -> Result<Trace, SimError> {
    let mut models = Vec::with_capacity(workload.len());
    for (index, p) in workload.iter().enumerate() {
        if !(p.send_time_ms.is_finite() && p.send_time_ms >= 0.0) {
            return Err(SimError::InvalidSendTime {
                index,
                send_time: p.send_time_ms,
            });
        }
        let link =
            topology
                .link(&p.source, &p.destination)
                .ok_or_else(|| SimError::UnknownLink {
                    from: p.source.clone(),
                    to: p.destination.clone(),
                })?;
        models.push(link.model);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: BinaryHeap<QueuedEvent> = workload
        .iter()
        .enumerate()
        .map(|(seq, p)| QueuedEvent {
            time: p.send_time_ms,
            send_time: p.send_time_ms,
            seq,
            kind: EventKind::Send,
            latency: 0.0,
        })
        .collect();

    let mut events = Vec::with_capacity(workload.len());
    while let Some(ev) = queue.pop() {
        let packet = &workload[ev.seq];
        match ev.kind {
            EventKind::Send => {
                let model = &models[ev.seq];
                let latency = sample_latency(model, &mut rng);
                let dropped =
                    model.drop_probability > 0.0 && rng.random::<f64>() < model.drop_probability;
                if dropped {
                    events.push(TraceEvent {
                        packet_index: ev.seq,
                        packet: packet.clone(),
                        outcome: Outcome::Dropped,
                    });
                } else {
                    queue.push(QueuedEvent {
                        time: ev.send_time + latency,
                        kind: EventKind::Deliver,
                        latency,
                        ..ev
                    });
                }
            }
            EventKind::Deliver => events.push(TraceEvent {
                packet_index: ev.seq,
                packet: packet.clone(),
                outcome: Outcome::Delivered {
                    deliver_time_ms: ev.time,
                    latency_ms: ev.latency,
                },
            }),
        }
    }
    Ok(Trace { events })
}

fn sample_latency(model: &LinkModel, rng: &mut ChaCha8Rng) -> f64 {
    if model.jitter_std_ms == 0.0 {
        return model.mean_latency_ms;
    }
    // jitter is validated finite and non-negative
    let normal = Normal::new(model.mean_latency_ms, model.jitter_std_ms)
        .expect("validated normal parameters");
    normal.sample(rng).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Latency statistics over the delivered packets of a trace.
pub fn measure_latency(trace: &Trace) -> Result<LatencyStats, SimError> {
    latency_stats(trace.delivered().filter_map(TraceEvent::latency_ms))
}

/// Welford accumulation; a constant series yields its value exactly.
pub fn latency_stats(latencies: impl IntoIterator<Item = f64>) -> Result<LatencyStats, SimError> {
    let mut count = 0usize;
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in latencies {
        count += 1;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
        min = min.min(x);
        max = max.max(x);
    }
    if count == 0 {
        return Err(SimError::EmptyTrace);
    }
    Ok(LatencyStats {
        mean,
        std: (m2 / count as f64).max(0.0).sqrt(),
        min,
        max,
        count,
    })
}

/// Periodic single-link packet schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub from: String,
    pub to: String,
    #[serde(default = "default_packets")]
    pub packets: usize,
    #[serde(default = "default_interval")]
    pub interval_ms: f64,
    #[serde(default = "default_payload")]
    pub payload: String,
}

fn default_packets() -> usize {
    1000
}

fn default_interval() -> f64 {
    1000.0
}

fn default_payload() -> String {
    "101001THF24.45".to_string()
}

impl WorkloadSpec {
    /// Defaults: 1000 packets, one per second, the reference TH message.
    pub fn new(from: &str, to: &str) -> Self {
        Self {
            from: from.to_string(),
            to: to.to_string(),
            packets: default_packets(),
            interval_ms: default_interval(),
            payload: default_payload(),
        }
    }

    pub fn packets(&self) -> Vec<Packet> {
        (0..self.packets)
            .map(|i| {
                Packet::new(
                    &self.from,
                    &self.to,
                    i as f64 * self.interval_ms,
                    self.payload.as_bytes().to_vec(),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(protocol: Protocol, jitter: Option<f64>) -> Topology {
        let mut link = LinkSpec::new("e", "f", protocol);
        link.jitter_std_ms = jitter;
        build_topology(
            &TopologySpec::default()
                .node("e", Tier::Edge)
                .node("f", Tier::Fog)
                .link(link),
        )
        .unwrap()
    }

    #[test]
    fn default_links_follow_measurements() {
        let wifi = default_link(Protocol::Wifi, TierPair::EdgeFog).unwrap();
        assert_eq!(wifi.mean_latency_ms, 14.566);
        assert!((wifi.jitter_std_ms - 1.4566).abs() < 1e-12);
        assert_eq!(wifi.drop_probability, 0.0);
        let bt = default_link(Protocol::BluetoothClassic, TierPair::EdgeFog).unwrap();
        assert_eq!(bt.mean_latency_ms, 171.15);
        assert_eq!(
            default_link(Protocol::Zigbee, TierPair::FogCloud),
            Err(SimError::UnsupportedPair {
                protocol: Protocol::Zigbee,
                tier_pair: TierPair::FogCloud
            })
        );
        for p in Protocol::ALL {
            for tp in [TierPair::EdgeEdge, TierPair::EdgeFog, TierPair::FogFog] {
                assert!(default_link(p, tp).is_ok());
            }
            assert_eq!(
                default_link(p, TierPair::FogCloud).is_ok(),
                p == Protocol::Wifi
            );
        }
    }

    #[test]
    fn bt_classic_fanout() {
        let hub = |n: usize| {
            let mut spec = TopologySpec::default().node("hub", Tier::Fog);
            for i in 0..n {
                let id = format!("e{i}");
                spec = spec.node(&id, Tier::Edge).link(LinkSpec::new(
                    &id,
                    "hub",
                    Protocol::BluetoothClassic,
                ));
            }
            build_topology(&spec)
        };
        assert!(hub(7).is_ok());
        let errs = hub(8).unwrap_err();
        assert_eq!(
            errs,
            vec![TopologyError::BtClassicFanoutExceeded {
                hub: "hub".into(),
                peers: 8
            }]
        );
    }

    #[test]
    fn ble_central_limit() {
        let central = |n: usize| {
            let mut spec = TopologySpec::default().node("fog", Tier::Fog);
            for i in 0..n {
                let id = format!("p{i}");
                spec = spec
                    .node(&id, Tier::Edge)
                    .link(LinkSpec::new(&id, "fog", Protocol::Ble));
            }
            build_topology(&spec)
        };
        assert!(central(20).is_ok());
        assert!(matches!(
            central(21).unwrap_err().as_slice(),
            [TopologyError::BlePeripheralLimitExceeded { peers: 21, .. }]
        ));
    }

    #[test]
    fn fog_cloud_requires_wifi_and_errors_accumulate() {
        let spec = TopologySpec::default()
            .node("f", Tier::Fog)
            .node("c", Tier::Cloud)
            .node("e", Tier::Edge)
            .link(LinkSpec::new("f", "c", Protocol::Zigbee))
            .link(LinkSpec::new("e", "c", Protocol::Wifi))
            .link(LinkSpec::new("e", "ghost", Protocol::Wifi));
        let errs = build_topology(&spec).unwrap_err();
        assert_eq!(errs.len(), 3);
        assert!(matches!(
            errs[0],
            TopologyError::FogCloudRequiresWiFi { .. }
        ));
        assert!(matches!(errs[1], TopologyError::UnsupportedPair { .. }));
        assert!(matches!(errs[2], TopologyError::UnknownNode(_)));
    }

    #[test]
    fn empty_topology_is_valid() {
        let t = build_topology(&TopologySpec::default()).unwrap();
        assert!(t.nodes().is_empty());
        assert!(run(&t, &[], 0).unwrap().is_empty());
    }

    #[test]
    fn single_packet_zero_jitter() {
        let mut spec = TopologySpec::default()
            .node("a", Tier::Edge)
            .node("b", Tier::Fog);
        let mut link = LinkSpec::new("a", "b", Protocol::Wifi);
        link.mean_latency_ms = Some(10.0);
        link.jitter_std_ms = Some(0.0);
        spec = spec.link(link);
        let topo = build_topology(&spec).unwrap();
        let trace = run(&topo, &[Packet::new("a", "b", 0.0, vec![])], 1).unwrap();
        assert_eq!(trace.events[0].deliver_time_ms(), Some(10.0));
    }

    #[test]
    fn unknown_link_is_rejected() {
        let topo = pair(Protocol::Wifi, None);
        assert!(matches!(
            run(&topo, &[Packet::new("f", "e", 0.0, vec![])], 0),
            Err(SimError::UnknownLink { .. })
        ));
    }

    #[test]
    fn deterministic_and_ordered() {
        let topo = pair(Protocol::Wifi, Some(5.0));
        let work: Vec<_> = (0..200)
            .map(|i| Packet::new("e", "f", (i / 4) as f64, vec![i as u8]))
            .collect();
        let a = run(&topo, &work, 9).unwrap();
        let b = run(&topo, &work, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run(&topo, &work, 10).unwrap());
        assert_eq!(a.len(), work.len());
        let times: Vec<f64> = a
            .events
            .iter()
            .map(|e| e.deliver_time_ms().unwrap())
            .collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        for e in &a.events {
            assert!(e.deliver_time_ms().unwrap() >= e.packet.send_time_ms);
        }
    }

    #[test]
    fn simultaneous_deliveries_keep_fifo_order() {
        let topo = pair(Protocol::Wifi, Some(0.0));
        let work: Vec<_> = (0..5)
            .map(|i| Packet::new("e", "f", 0.0, vec![i]))
            .collect();
        let trace = run(&topo, &work, 0).unwrap();
        let order: Vec<usize> = trace.events.iter().map(|e| e.packet_index).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn drops_are_recorded() {
        let mut link = LinkSpec::new("e", "f", Protocol::Wifi);
        link.drop_probability = Some(1.0);
        let topo = build_topology(
            &TopologySpec::default()
                .node("e", Tier::Edge)
                .node("f", Tier::Fog)
                .link(link),
        )
        .unwrap();
        let trace = run(&topo, &[Packet::new("e", "f", 0.0, vec![])], 0).unwrap();
        assert_eq!(trace.events[0].outcome, Outcome::Dropped);
        assert_eq!(measure_latency(&trace), Err(SimError::EmptyTrace));
    }

    #[test]
    fn latency_stats_examples() {
        let s = latency_stats([10.0, 20.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.count), (15.0, 10.0, 20.0, 2));
        assert_eq!(s.std, 5.0);
        let s = latency_stats([14.566]).unwrap();
        assert_eq!((s.mean, s.std), (14.566, 0.0));
        assert_eq!(latency_stats([]), Err(SimError::EmptyTrace));
    }

    #[test]
    fn jittered_mean_for_seed_42() {
        let topo = pair(Protocol::Wifi, None);
        let work = WorkloadSpec {
            from: "e".into(),
            to: "f".into(),
            packets: 1000,
            interval_ms: 1000.0,
            payload: default_payload(),
        }
        .packets();
        let stats = measure_latency(&run(&topo, &work, 42).unwrap()).unwrap();
        assert!((stats.mean - 14.566).abs() <= 0.15, "mean {}", stats.mean);
        assert_eq!(stats.count, 1000);
    }

    #[test]
    fn trace_exports() {
        let topo = pair(Protocol::Ble, None);
        let trace = run(&topo, &[Packet::new("e", "f", 0.0, b"x".to_vec())], 3).unwrap();
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("packet_index,source,destination"));
        assert_eq!(text.lines().count(), 2);
        let mut nd = Vec::new();
        trace.write_ndjson(&mut nd).unwrap();
        let back: TraceEvent =
            serde_json::from_slice(nd.split(|&b| b == b'\n').next().unwrap()).unwrap();
        assert_eq!(back, trace.events[0]);
    }
}
