//! Typed async client for the wayfind HTTP service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use wayfind_core::api::*;
use wayfind_core::distance::CalibrationRecord;
use wayfind_core::finetune::TrainOutcome;
use wayfind_core::quantization::SizeReport;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status} {}: {}", .body.kind, .body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("unexpected response ({status}): {text}")]
    Unexpected { status: u16, text: String },
}

impl ClientError {
    /// The service's error kind, if the service answered with one.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.kind),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status().as_u16();
        let text = resp.text().await?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text).map_err(|_| ClientError::Unexpected { status, text });
        }
        match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => Err(ClientError::Api { status, body }),
            Err(_) => Err(ClientError::Unexpected { status, text }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn estimate_distance(&self, req: &EstimateRequest) -> Result<EstimateResponse, ClientError> {
        self.post("/v1/distance/estimate", req).await
    }

    pub async fn calibrate(&self, req: &CalibrateRequest) -> Result<CalibrationRecord, ClientError> {
        self.post("/v1/distance/calibrate", req).await
    }

    pub async fn headings(&self, req: &HeadingsRequest) -> Result<HeadingsResponse, ClientError> {
        self.post("/v1/distance/headings", req).await
    }

    pub async fn quantize(&self, req: &QuantizeRequest) -> Result<QuantizeResponse, ClientError> {
        self.post("/v1/quant/quantize", req).await
    }

    pub async fn size_report(&self, req: &SizeReportRequest) -> Result<SizeReport, ClientError> {
        self.post("/v1/quant/size-report", req).await
    }

    pub async fn grad_check(&self, req: &GradCheckRequest) -> Result<GradCheckResponse, ClientError> {
        self.post("/v1/finetune/grad-check", req).await
    }

    pub async fn train(&self, req: &TrainRequest) -> Result<TrainOutcome, ClientError> {
        self.post("/v1/finetune/train", req).await
    }

    pub async fn early_stop(&self, req: &EarlyStopRequest) -> Result<EarlyStopResponse, ClientError> {
        self.post("/v1/finetune/early-stop", req).await
    }

    pub async fn describe(&self, req: &DescribeRequest) -> Result<DescribeResponse, ClientError> {
        self.post("/v1/describe", req).await
    }

    pub async fn normalize(&self, text: &str) -> Result<String, ClientError> {
        let body: TextBody = self.post("/v1/tts/normalize", &TextBody { text: text.into() }).await?;
        Ok(body.text)
    }

    pub async fn speech_request(&self, req: &SpeechRequest) -> Result<String, ClientError> {
        let body: WireBody = self.post("/v1/tts/request", req).await?;
        Ok(body.body)
    }

    pub async fn start_run(&self, req: &StartRunRequest) -> Result<String, ClientError> {
        let created: RunCreated = self.post("/v1/runs", req).await?;
        Ok(created.run_id)
    }

    /// Records from `offset` onward plus the run's state.
    pub async fn run_status(&self, run_id: &str, offset: usize) -> Result<RunStatus, ClientError> {
        self.get(&format!("/v1/runs/{run_id}?offset={offset}")).await
    }

    pub async fn stop_run(&self, run_id: &str) -> Result<RunStatus, ClientError> {
        let resp = self
            .http
            .delete(format!("{}/v1/runs/{run_id}", self.base))
            .send()
            .await?;
        Self::decode(resp).await
    }
}
