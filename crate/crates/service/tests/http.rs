use anoml_core::artifact::{package_model, ModelArtifact};
use anoml_core::dataset::synthesize;
use anoml_core::detect::{DetectorConfig, DetectorKind};
use anoml_core::preprocess::{FittedTransform, ScalerKind, Sr};
use anoml_service::{router, serve_std, Health, InferenceResponse, ModelSlot};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

const WINDOW: usize = 8;

fn artifact() -> ModelArtifact {
    let frame = synthesize(400, 3, 7, &[]).unwrap();
    let t = FittedTransform::fit(Sr::Scale(ScalerKind::MinMax), &frame, WINDOW).unwrap();
    let x = t.windows(&frame).unwrap().flatten();
    let cfg = DetectorConfig::default_for(DetectorKind::IsolationForest).with_seed(3);
    let model = cfg.fit(x.view()).unwrap();
    package_model(model, cfg, t, frame.fingerprint())
}

fn normal_window() -> Vec<Vec<f64>> {
    let frame = synthesize(WINDOW, 3, 99, &[]).unwrap();
    frame
        .features()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect()
}

async fn call(slot: &ModelSlot, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(slot.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn infer_req(body: impl Into<Body>) -> Request<Body> {
    Request::post("/infer")
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap()
}

fn health_req() -> Request<Body> {
    Request::get("/health").body(Body::empty()).unwrap()
}

#[tokio::test]
async fn unavailable_until_a_model_is_installed() {
    let slot = ModelSlot::empty();
    assert_eq!(
        call(&slot, health_req()).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    let body = json!({ "window": normal_window() }).to_string();
    assert_eq!(
        call(&slot, infer_req(body)).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    let a = artifact();
    assert!(slot.install(a.clone()));
    assert!(!slot.install(a));
    assert_eq!(call(&slot, health_req()).await.0, StatusCode::OK);
}

#[tokio::test]
async fn health_reports_metadata() {
    let a = artifact();
    let (status, body) = call(&ModelSlot::ready(a.clone()), health_req()).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!(h.model_id, a.metadata.model_id);
    assert_eq!(h.detector, "IF");
    assert_eq!(h.sr, "MM");
    assert_eq!((h.window_len, h.n_features), (WINDOW, 3));
    assert_eq!(h.threshold, 0.5);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let slot = ModelSlot::ready(artifact());
    let mut short = normal_window();
    short.pop();
    let mut narrow = normal_window();
    narrow[2].pop();
    for body in [
        json!({ "window": short }).to_string(),
        json!({ "window": narrow }).to_string(),
        "{\"window\": [[1, 2".to_string(),
        "{\"rows\": []}".to_string(),
    ] {
        let (status, v) = call(&slot, infer_req(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn planted_outlier_is_flagged_and_answers_are_stable() {
    let a = artifact();
    let slot = ModelSlot::ready(a.clone());
    let outlier = vec![vec![500.0, -500.0, 500.0]; WINDOW];
    let (status, v) = call(&slot, infer_req(json!({ "window": outlier }).to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let r: InferenceResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.label, 1);
    assert_eq!(r.model_id, a.metadata.model_id);

    let body = json!({ "window": normal_window() }).to_string();
    let mut seen: Vec<InferenceResponse> = Vec::new();
    for _ in 0..5 {
        let (_, v) = call(&slot, infer_req(body.clone())).await;
        let mut r: InferenceResponse = serde_json::from_value(v).unwrap();
        assert!(r.latency_ms >= 0.0);
        r.latency_ms = 0.0;
        seen.push(r);
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
    assert!(seen[0].score < r.score);
}

#[tokio::test(flavor = "multi_thread")]
async fn serves_over_tcp() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_std(listener, ModelSlot::ready(artifact())));
    let body = json!({ "window": normal_window() }).to_string();
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!(
        "POST /infer HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).await.unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let json_body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    let r: InferenceResponse = serde_json::from_str(json_body).unwrap();
    assert!(r.label <= 1);
}
