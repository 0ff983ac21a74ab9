//! Stand-in detector and TTS backends speaking the real wire formats.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use wayfind_core::perception::{mock_detect, DetectRequest, DetectionScript};
use wayfind_core::scheduler::{Frame, FramePayload};
use wayfind_core::tts::SPEAKER_COUNT;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireProsody {
    #[allow(dead_code)]
    pitch: f64,
    #[allow(dead_code)]
    rate: f64,
    #[allow(dead_code)]
    amplitude: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSpeak {
    text: String,
    speaker_id: u32,
    #[allow(dead_code)]
    prosody: WireProsody,
}

/// Speech stub: acknowledges each valid `/speak` with a duration
/// proportional to the word count and keeps the raw bodies it received.
#[derive(Clone)]
pub struct StubTts {
    pub ms_per_word: u64,
    received: Arc<Mutex<Vec<String>>>,
}

impl StubTts {
    pub fn new(ms_per_word: u64) -> Self {
        Self {
            ms_per_word,
            received: Arc::default(),
        }
    }

    /// Raw request bodies in arrival order.
    pub fn received(&self) -> Vec<String> {
        self.received.lock().unwrap().clone()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/speak", post(speak))
            .route("/requests", get(requests))
            .with_state(self.clone())
    }
}

fn bad(msg: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": msg }))).into_response()
}

async fn speak(State(stub): State<StubTts>, body: String) -> Response {
    let req: WireSpeak = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return bad(e.to_string()),
    };
    if req.speaker_id >= SPEAKER_COUNT {
        return bad(format!("speaker_id {} out of range", req.speaker_id));
    }
    let words = req.text.split_whitespace().count() as u64;
    stub.received.lock().unwrap().push(body);
    Json(json!({ "duration_ms": words * stub.ms_per_word })).into_response()
}

async fn requests(State(stub): State<StubTts>) -> Json<Vec<String>> {
    Json(stub.received())
}

/// Detector stub answering `/detect` from a script.
pub fn stub_detector_router(script: DetectionScript) -> Router {
    Router::new()
        .route("/detect", post(detect))
        .route("/health", get(|| async { "ok" }))
        .with_state(Arc::new(script))
}

async fn detect(State(script): State<Arc<DetectionScript>>, Json(req): Json<DetectRequest>) -> Response {
    let frame = Frame {
        frame_id: req.frame_id,
        timestamp_ms: 0,
        width_px: req.width,
        height_px: req.height,
        payload: FramePayload::Path {
            path: req.image_path.into(),
        },
    };
    Json(json!({ "detections": mock_detect(&frame, &script) })).into_response()
}
