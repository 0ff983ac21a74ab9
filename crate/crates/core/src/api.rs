//! Request and response bodies of the HTTP service, shared by server and client.

use serde::{Deserialize, Serialize};

use crate::describer::{DescriberConfig, SceneDescription};
use crate::distance::{Direction, HeadingConfig, HeightRegistry, RangedObject, Track};
use crate::finetune::{LabeledSample, ModelShape, StopDecision, TinyTwoHeadModel, TrainingConfig};
use crate::perception::{BBox, Detection};
use crate::pipeline::{CycleMetrics, PipelineConfig, RunSummary};
use crate::quantization::{LayerSpec, QuantizedTensor, Tensor};
use crate::tts::Prosody;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Error variant name, e.g. `SpeakerOutOfRange`.
    pub kind: String,
    pub message: String,
    /// Offending config key, for schema violations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRequest {
    pub bbox: BBox,
    pub label: String,
    pub focal_length_px: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
    /// Built-in heights when absent.
    #[serde(default)]
    pub heights: Option<HeightRegistry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub distance_m: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateRequest {
    pub known_height_m: f64,
    pub known_distance_m: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadingsRequest {
    pub frames: Vec<Vec<Detection>>,
    #[serde(default)]
    pub config: HeadingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingsResponse {
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeRequest {
    pub tensor: Tensor,
    pub bit_width: u32,
    /// Per-channel along this axis; per-tensor when absent.
    #[serde(default)]
    pub axis: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeResponse {
    pub quantized: QuantizedTensor,
    pub dequantized: Tensor,
    pub squared_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeReportRequest {
    pub layers: Vec<LayerSpec>,
    pub bit_width: u32,
}

fn default_step() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckRequest {
    pub model: TinyTwoHeadModel,
    pub batch: Vec<LabeledSample>,
    pub lambda: f64,
    pub alpha: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckResponse {
    pub max_relative_error: f64,
}

/// Either a full model or a shape plus seed for a fresh one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    #[serde(default)]
    pub model: Option<TinyTwoHeadModel>,
    #[serde(default)]
    pub shape: Option<ModelShape>,
    #[serde(default)]
    pub seed: u64,
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    #[serde(default)]
    pub config: TrainingConfig,
}

fn default_min_delta() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopRequest {
    pub losses: Vec<f64>,
    pub patience: usize,
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopResponse {
    pub decisions: Vec<StopDecision>,
    /// Index of the loss that triggered the stop.
    pub stop_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeRequest {
    pub objects: Vec<RangedObject>,
    #[serde(default)]
    pub config: DescriberConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescribeResponse {
    pub description: SceneDescription,
    /// The description after speech normalization.
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextBody {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechRequest {
    pub text: String,
    pub speaker_id: u32,
    #[serde(default)]
    pub prosody: Prosody,
}

/// Exact bytes that would be posted to `/speak`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBody {
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRunRequest {
    pub config: PipelineConfig,
    /// `"synthetic"` or a frame directory readable by the server.
    pub source: String,
    #[serde(default)]
    pub simulated_clock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCreated {
    pub run_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub metrics: CycleMetrics,
    pub utterance: Option<String>,
}

/// Progress of a run. `records` starts at the requested offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub state: RunState,
    pub records: Vec<CycleRecord>,
    /// Offset to ask for next time to get only new records.
    pub next_offset: usize,
    pub summary: Option<RunSummary>,
    pub error: Option<ErrorBody>,
}
