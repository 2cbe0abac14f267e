use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anoml_core::artifact::{load_model, package_model, ModelArtifact};
use anoml_core::codegen;
use anoml_core::config::{Config, TransformSpec};
use anoml_core::dataset::{
    concat, from_readings, normal_rows, synthesize, AnomalyInjection, CsvSchema, InjectionMode,
    TimeSeriesFrame,
};
use anoml_core::detect::{DetectorConfig, DetectorKind};
use anoml_core::metrics::{self, write_report_csv, MetricReport, ReportRow};
use anoml_core::preprocess::{make_windows, FittedTransform};
use anoml_core::scenario::{run_scenario, MetricBlock, ScenarioSpec};
use anoml_core::transport_sim::{
    self, build_topology, LinkSpec, Protocol, Tier, TopologySpec, WorkloadSpec,
};
use anoml_core::wire_format::decode_text;
use anoml_core::Label;
use anoml_service::{InferenceResponse, ModelSlot};
use serde::Serialize;

use crate::error::{runtime, validation, CliResult};
use crate::{
    store, CodegenArgs, DeployArgs, InferArgs, IngestArgs, ReportArgs, RetrainArgs, SimulateArgs,
    TrainArgs,
};

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn schema(config: &Config) -> CsvSchema {
    config.schema.clone().unwrap_or_default()
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(runtime)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn parse_injection(text: &str, n_features: usize) -> CliResult<AnomalyInjection> {
    let bad = || {
        validation(format!(
            "injection {text:?}: expected start:end:mode:magnitude[:f0,f1,..]"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    if !(4..=5).contains(&parts.len()) {
        return Err(bad());
    }
    let mode = match parts[2].to_ascii_lowercase().as_str() {
        "ramp" => InjectionMode::Ramp,
        "spike" => InjectionMode::Spike,
        "stuck" => InjectionMode::Stuck,
        _ => return Err(bad()),
    };
    let target_features = match parts.get(4) {
        Some(list) => list
            .split(',')
            .map(|f| f.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<Vec<usize>>>()?,
        None => (0..n_features).collect(),
    };
    Ok(AnomalyInjection {
        start_index: parts[0].parse().map_err(|_| bad())?,
        end_index: parts[1].parse().map_err(|_| bad())?,
        mode,
        magnitude: parts[3].parse().map_err(|_| bad())?,
        target_features,
    })
}

fn read_stream(path: &Path, interval_ms: u64) -> CliResult<TimeSeriesFrame> {
    let text = fs::read_to_string(path)?;
    let mut readings = Vec::new();
    for (i, line) in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
    {
        let (ts, msg) = match line.split_once(',') {
            Some((t, m)) => (
                t.trim()
                    .parse()
                    .map_err(|_| validation(format!("line {}: bad timestamp {t:?}", i + 1)))?,
                m.trim(),
            ),
            None => (i as u64 * interval_ms, line),
        };
        readings
            .push(decode_text(msg, ts).map_err(|e| validation(format!("line {}: {e}", i + 1)))?);
    }
    let (frame, dropped) = from_readings(&readings)?;
    if dropped > 0 {
        eprintln!(
            "{}",
            serde_json::json!({ "warning": "incomplete rows dropped", "rows": dropped })
        );
    }
    Ok(frame)
}

#[derive(Serialize)]
struct FrameSummary<'a> {
    name: &'a str,
    path: String,
    rows: usize,
    features: usize,
    anomalous_rows: usize,
    fingerprint: String,
}

pub fn ingest(a: IngestArgs) -> CliResult<()> {
    let config = load_config(a.config.as_deref())?;
    let frame = if let Some(csv) = &a.csv {
        anoml_core::dataset::load_csv(csv, &schema(&config))?
    } else if let Some(stream) = &a.stream {
        read_stream(stream, a.interval_ms)?
    } else if a.synth {
        let injections = a
            .inject
            .iter()
            .map(|s| parse_injection(s, a.features))
            .collect::<CliResult<Vec<_>>>()?;
        synthesize(a.rows, a.features, a.seed, &injections)?
    } else {
        return Err(validation("ingest needs one of --csv, --stream or --synth"));
    };
    let path = store::frame_path(&a.name)?;
    frame.save_csv(&path)?;
    print_json(&FrameSummary {
        name: &a.name,
        path: path.display().to_string(),
        rows: frame.n_rows(),
        features: frame.n_features(),
        anomalous_rows: frame.anomalous_count(),
        fingerprint: frame.fingerprint(),
    })
}

#[derive(Serialize)]
struct TrainSummary {
    model_id: String,
    detector: &'static str,
    sr: &'static str,
    window_len: usize,
    input_dim: usize,
    training_windows: usize,
    threshold: f64,
    size_kb: f64,
    path: String,
}

fn fit_artifact(
    frame: &TimeSeriesFrame,
    transform: &TransformSpec,
    detector: DetectorConfig,
) -> CliResult<(ModelArtifact, usize)> {
    let train = normal_rows(frame)?;
    if train.n_rows() == 0 {
        return Err(validation("no normal rows to train on"));
    }
    let fitted = FittedTransform::fit(transform.sr, &train, transform.window_len)?;
    let windows = fitted.windows(&train)?.flatten();
    let model = detector.fit(windows.view())?;
    Ok((
        package_model(model, detector, fitted, train.fingerprint()),
        windows.nrows(),
    ))
}

fn save_and_summarize(artifact: &ModelArtifact, windows: usize, out: &Path) -> CliResult<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    artifact.save(out)?;
    let t = &artifact.metadata.transform;
    print_json(&TrainSummary {
        model_id: artifact.metadata.model_id.clone(),
        detector: artifact.kind().short_name(),
        sr: t.sr.label(),
        window_len: t.window_len,
        input_dim: t.input_dim(),
        training_windows: windows,
        threshold: artifact.model.threshold(),
        size_kb: artifact.size_kb(),
        path: out.display().to_string(),
    })
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let config = load_config(a.config.as_deref())?;
    let mut transform = config.transform.clone().unwrap_or_default();
    if let Some(sr) = &a.sr {
        transform.sr = sr.parse()?;
    }
    if let Some(w) = a.window {
        transform.window_len = w;
    }
    let mut detector = match (&a.detector, &config.detector) {
        (Some(d), _) => DetectorConfig::default_for(d.parse::<DetectorKind>()?),
        (None, Some(c)) => c.clone(),
        (None, None) => DetectorConfig::default_for(DetectorKind::IsolationForest),
    };
    if let Some(seed) = a.seed {
        detector = detector.with_seed(seed);
    }
    let frame = store::load_input(&a.input, &schema(&config))?;
    let (artifact, windows) = fit_artifact(&frame, &transform, detector)?;
    save_and_summarize(&artifact, windows, &a.out)
}

pub fn retrain(a: RetrainArgs) -> CliResult<()> {
    let config = load_config(a.config.as_deref())?;
    let previous = ModelArtifact::load(&a.model)?;
    let frames = a
        .input
        .iter()
        .map(|i| store::load_input(i, &schema(&config)))
        .collect::<CliResult<Vec<_>>>()?;
    let frame = concat(&frames)?;
    let t = &previous.metadata.transform;
    if frame.n_features() != t.n_features {
        return Err(validation(format!(
            "model expects {} features, data has {}",
            t.n_features,
            frame.n_features()
        )));
    }
    let spec = TransformSpec {
        sr: t.sr,
        window_len: t.window_len,
    };
    let (artifact, windows) = fit_artifact(&frame, &spec, previous.metadata.detector.clone())?;
    save_and_summarize(&artifact, windows, &a.out)
}

fn fetch(model: &str) -> CliResult<Vec<u8>> {
    if model.starts_with("http://") || model.starts_with("https://") {
        let mut resp = ureq::get(model).call().map_err(runtime)?;
        resp.body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(runtime)
    } else {
        Ok(fs::read(model)?)
    }
}

pub fn deploy(a: DeployArgs) -> CliResult<()> {
    if let Some(addr) = &a.serve {
        let listener = std::net::TcpListener::bind(addr).map_err(runtime)?;
        let local = listener.local_addr()?;
        let slot = ModelSlot::empty();
        let rt = tokio::runtime::Runtime::new()?;
        let server = rt.spawn(anoml_service::serve_std(listener, slot.clone()));
        print_json(&serde_json::json!({ "listening": local.to_string() }))?;
        let artifact = load_model(&fetch(&a.model)?)?;
        let id = artifact.metadata.model_id.clone();
        slot.install(artifact);
        print_json(&serde_json::json!({ "ready": true, "model_id": id }))?;
        return rt.block_on(server).map_err(runtime)?.map_err(runtime);
    }
    let bytes = fetch(&a.model)?;
    let artifact = load_model(&bytes)?;
    let target = a
        .target
        .ok_or_else(|| validation("deploy needs --target or --serve"))?;
    // an existing directory, or a path spelled with a trailing separator
    let dir_like = target.is_dir()
        || target
            .as_os_str()
            .to_string_lossy()
            .ends_with(std::path::is_separator);
    let dest = if dir_like {
        target.join(format!("{}.anml", artifact.metadata.model_id))
    } else {
        target
    };
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&dest, &bytes)?;
    print_json(&serde_json::json!({
        "model_id": artifact.metadata.model_id,
        "detector": artifact.kind().short_name(),
        "path": dest.display().to_string(),
    }))
}

fn emit_rows(rows: &[ReportRow], out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_report_csv(rows, BufWriter::new(fs::File::create(p)?)).map_err(runtime)?;
        }
        None => write_report_csv(rows, std::io::stdout().lock()).map_err(runtime)?,
    }
    Ok(())
}

pub fn infer(a: InferArgs) -> CliResult<()> {
    let config = load_config(a.config.as_deref())?;
    let frame = store::load_input(&a.input, &schema(&config))?;
    let row = match (&a.model, &a.endpoint) {
        (Some(path), _) => infer_local(&ModelArtifact::load(path)?, &frame, a.invert_positive)?,
        (None, Some(url)) => infer_remote(url.trim_end_matches('/'), &frame, a.invert_positive)?,
        (None, None) => return Err(validation("infer needs --model or --endpoint")),
    };
    emit_rows(&[row], a.out.as_deref())
}

fn infer_local(
    artifact: &ModelArtifact,
    frame: &TimeSeriesFrame,
    invert: bool,
) -> CliResult<ReportRow> {
    let t = &artifact.metadata.transform;
    let start = Instant::now();
    let windows = t.windows(frame)?;
    let scaling_s = start.elapsed().as_secs_f64();
    let flat = windows.flatten();
    let mut scores = Vec::with_capacity(flat.nrows());
    let mut labels = Vec::with_capacity(flat.nrows());
    let start = Instant::now();
    for x in flat.rows() {
        let s = artifact
            .model
            .score(x.as_slice().expect("standard layout"))?;
        labels.push(artifact.model.classify(&s));
        scores.push(s.value);
    }
    let inference_ms = start.elapsed().as_secs_f64() * 1e3 / flat.nrows().max(1) as f64;
    let mut m = MetricReport::from_predictions(&labels, &scores, &windows.labels, invert)?;
    m.inference_ms = inference_ms;
    m.scaling_reduction_s = scaling_s;
    Ok(ReportRow {
        algorithm: artifact.kind().short_name().into(),
        sr: t.sr.label().into(),
        tier: "local".into(),
        model_size_kb: artifact.size_kb(),
        metrics: m,
    })
}

fn infer_remote(base: &str, frame: &TimeSeriesFrame, invert: bool) -> CliResult<ReportRow> {
    let health: serde_json::Value = ureq::get(&format!("{base}/health"))
        .call()
        .map_err(runtime)?
        .body_mut()
        .read_json()
        .map_err(runtime)?;
    let window_len = health["window_len"]
        .as_u64()
        .ok_or_else(|| runtime("health response lacks window_len"))? as usize;
    let windows = make_windows(frame, window_len, 1)?;
    let agent = ureq::Agent::new_with_defaults();
    let mut scores = Vec::with_capacity(windows.n_windows());
    let mut labels = Vec::with_capacity(windows.n_windows());
    let mut latency = 0.0;
    for w in 0..windows.n_windows() {
        let rows = windows.window_rows(w);
        let resp: InferenceResponse = match agent
            .post(&format!("{base}/infer"))
            .send_json(serde_json::json!({ "window": rows }))
        {
            Ok(mut r) => r.body_mut().read_json().map_err(runtime)?,
            Err(ureq::Error::StatusCode(400)) => {
                return Err(validation("service rejected the window (400)"))
            }
            Err(e) => return Err(runtime(e)),
        };
        latency += resp.latency_ms;
        labels.push(if resp.label == 1 {
            Label::Anomalous
        } else {
            Label::Normal
        });
        scores.push(resp.score);
    }
    let mut m = MetricReport::from_predictions(&labels, &scores, &windows.labels, invert)?;
    m.inference_ms = latency / windows.n_windows().max(1) as f64;
    Ok(ReportRow {
        algorithm: health["detector"].as_str().unwrap_or("?").into(),
        sr: health["sr"].as_str().unwrap_or("?").into(),
        tier: "http".into(),
        model_size_kb: 0.0,
        metrics: m,
    })
}

#[derive(Serialize)]
struct SimulateSummary {
    from: String,
    to: String,
    protocol: Protocol,
    packets: usize,
    delivered: usize,
    dropped: usize,
    latency_ms: transport_sim::LatencyStats,
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let config = Config::load(&a.topology)?;
    let topo = build_topology(config.require_topology()?)?;
    let mut workload = match &config.workload {
        Some(w) => w.clone(),
        None => {
            let l = topo
                .links()
                .first()
                .ok_or_else(|| validation("topology has no links"))?;
            WorkloadSpec::new(topo.node_id(l.from), topo.node_id(l.to))
        }
    };
    if let Some(n) = a.packets {
        workload.packets = n;
    }
    let link = topo
        .link(&workload.from, &workload.to)
        .ok_or_else(|| validation(format!("no link {} -> {}", workload.from, workload.to)))?;
    let protocol = link.model.protocol;
    let trace = transport_sim::run(&topo, &workload.packets(), a.seed)?;
    if let Some(path) = &a.trace {
        let file = BufWriter::new(fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "ndjson") {
            trace.write_ndjson(file)?;
        } else {
            trace.write_csv(file)?;
        }
    }
    let delivered = trace.delivered().count();
    print_json(&SimulateSummary {
        from: workload.from.clone(),
        to: workload.to.clone(),
        protocol,
        packets: trace.len(),
        delivered,
        dropped: trace.len() - delivered,
        latency_ms: transport_sim::measure_latency(&trace)?,
    })
}

pub fn codegen(a: CodegenArgs) -> CliResult<()> {
    let config = Config::load(&a.spec)?;
    let spec = config.require_node()?;
    let bundle = codegen::generate(spec)?;
    let manifest = bundle.write_to(spec, &a.out)?;
    print_json(&manifest)
}

fn default_topology() -> TopologySpec {
    TopologySpec::default()
        .node("edge-1", Tier::Edge)
        .node("fog-1", Tier::Fog)
        .node("cloud-1", Tier::Cloud)
        .link(LinkSpec::new("edge-1", "fog-1", Protocol::Wifi))
        .link(LinkSpec::new("fog-1", "cloud-1", Protocol::Wifi))
}

fn block_report(b: &MetricBlock, invert: bool) -> MetricReport {
    let counts = if invert {
        b.counts.inverted()
    } else {
        b.counts
    };
    MetricReport {
        accuracy: metrics::accuracy(&counts),
        precision: metrics::precision(&counts),
        recall: metrics::recall(&counts),
        f1: metrics::f1(&counts),
        auc: b.auc,
        counts,
        inference_ms: 0.0,
        scaling_reduction_s: 0.0,
    }
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    let config = load_config(a.topology.as_deref())?;
    let topo = build_topology(&config.topology.clone().unwrap_or_else(default_topology))?;
    let frame = store::load_input(&a.input, &schema(&config))?;
    let base = config
        .scenario
        .clone()
        .unwrap_or_else(|| ScenarioSpec::new(Tier::Cloud));
    let placements = a
        .placements
        .iter()
        .map(|p| match p.trim().to_ascii_lowercase().as_str() {
            "edge" => Ok(Tier::Edge),
            "fog" => Ok(Tier::Fog),
            "cloud" => Ok(Tier::Cloud),
            other => Err(validation(format!("unknown placement {other:?}"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for path in &a.model {
        let artifact = ModelArtifact::load(path)?;
        for &placement in &placements {
            let spec = ScenarioSpec {
                placement,
                realistic_edge: a.realistic_edge || base.realistic_edge,
                ..base.clone()
            };
            let r = run_scenario(&topo, &spec, &artifact, &frame, a.seed)?;
            let mut m = block_report(&r.metrics, a.invert_positive);
            m.inference_ms = r.timing.inference_ms;
            m.scaling_reduction_s = r.timing.scaling_reduction_s;
            rows.push(ReportRow {
                algorithm: artifact.kind().short_name().into(),
                sr: artifact.metadata.transform.sr.label().into(),
                tier: placement.to_string(),
                model_size_kb: artifact.size_kb(),
                metrics: m,
            });
            reports.push(r);
        }
    }
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_vec_pretty(&reports).map_err(runtime)?)?;
    }
    emit_rows(&rows, a.out.as_deref())
}
