//! HTTP inference over a packaged model.
//!
//! - `POST /infer` with `{"window": [[...], ...]}` (one raw row per time step)
//!   answers `{"label", "score", "model_id", "latency_ms"}`
//! - `GET /health` answers the model metadata
//!
//! Both routes answer 503 until a model is installed. The model is immutable
//! once installed; every request scores against the same `Arc`.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use anoml_core::artifact::ModelArtifact;
use anoml_core::Label;
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferRequest {
    pub window: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    /// 0 normal, 1 anomalous.
    pub label: u8,
    pub score: f64,
    pub model_id: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub detector: String,
    pub model_id: String,
    pub sr: String,
    pub window_len: usize,
    pub n_features: usize,
    pub threshold: f64,
    pub train_fingerprint: String,
    pub format_version: u16,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

/// Shared handle; clones see the same slot.
#[derive(Clone, Default)]
pub struct ModelSlot(Arc<OnceLock<Arc<ModelArtifact>>>);

impl ModelSlot {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ready(artifact: ModelArtifact) -> Self {
        let slot = Self::empty();
        slot.install(artifact);
        slot
    }

    /// Returns `false` if a model was already installed.
    pub fn install(&self, artifact: ModelArtifact) -> bool {
        self.0.set(Arc::new(artifact)).is_ok()
    }

    pub fn get(&self) -> Option<Arc<ModelArtifact>> {
        self.0.get().cloned()
    }
}

pub fn router(slot: ModelSlot) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/infer", post(infer))
        .with_state(slot)
}

async fn health(State(slot): State<ModelSlot>) -> Response {
    let Some(a) = slot.get() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "model not ready");
    };
    let m = &a.metadata;
    Json(Health {
        status: "ok".into(),
        detector: a.kind().short_name().into(),
        model_id: m.model_id.clone(),
        sr: m.transform.sr.label().into(),
        window_len: m.transform.window_len,
        n_features: m.transform.n_features,
        threshold: a.model.threshold(),
        train_fingerprint: m.train_fingerprint.clone(),
        format_version: m.format_version,
    })
    .into_response()
}

/// Score one raw window against an artifact.
pub fn infer_window(a: &ModelArtifact, window: &[Vec<f64>]) -> Result<(Label, f64), String> {
    let t = &a.metadata.transform;
    if window.len() != t.window_len {
        return Err(format!(
            "expected {} rows, got {}",
            t.window_len,
            window.len()
        ));
    }
    if let Some(row) = window.iter().find(|r| r.len() != t.n_features) {
        return Err(format!(
            "expected {} features per row, got {}",
            t.n_features,
            row.len()
        ));
    }
    let flat: Vec<f64> = window.iter().flatten().copied().collect();
    let x = t.flat_input_slice(&flat).map_err(|e| e.to_string())?;
    let s = a.model.score(&x).map_err(|e| e.to_string())?;
    Ok((a.model.classify(&s), s.value))
}

async fn infer(
    State(slot): State<ModelSlot>,
    body: Result<Json<InferRequest>, JsonRejection>,
) -> Response {
    let Some(a) = slot.get() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "model not ready");
    };
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let start = Instant::now();
    match infer_window(&a, &req.window) {
        Ok((label, score)) => Json(InferenceResponse {
            label: label.as_u8(),
            score,
            model_id: a.metadata.model_id.clone(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        })
        .into_response(),
        Err(msg) => error(StatusCode::BAD_REQUEST, msg),
    }
}

/// Serve until the process ends.
pub async fn serve(listener: TcpListener, slot: ModelSlot) -> std::io::Result<()> {
    axum::serve(listener, router(slot)).await
}

/// [`serve`] over a listener bound outside the runtime.
pub async fn serve_std(listener: std::net::TcpListener, slot: ModelSlot) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    serve(TcpListener::from_std(listener)?, slot).await
}
