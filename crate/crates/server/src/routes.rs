use axum::extract::FromRequest;
use axum::Json;
use wayfind_core::api::*;
use wayfind_core::describer::describe;
use wayfind_core::distance::{
    associate_and_heading, calibrate_focal_length, direction_of, estimate_distance, CalibrationRecord, CameraModel,
};
use wayfind_core::finetune::{grad_check, train, EarlyStopMonitor, StopDecision, TinyTwoHeadModel, TrainOutcome};
use wayfind_core::quantization::{
    dequantize, quantize_per_channel, quantize_tensor, round_trip_sse, size_report, SizeReport, Tensor,
};
use wayfind_core::tts::{build_request, normalize_text};

use crate::error::ApiError;

/// JSON body whose rejections are reported as [`ApiError`].
#[derive(FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

pub type ApiResult<T> = Result<Json<T>, ApiError>;

pub async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub async fn estimate(ApiJson(req): ApiJson<EstimateRequest>) -> ApiResult<EstimateResponse> {
    let camera =
        CameraModel::new(req.focal_length_px, req.image_width_px, req.image_height_px).map_err(ApiError::invalid)?;
    let registry = req.heights.unwrap_or_default();
    let distance_m = estimate_distance(&req.bbox, &req.label, &registry, &camera).map_err(ApiError::invalid)?;
    Ok(Json(EstimateResponse {
        distance_m,
        direction: direction_of(&req.bbox, req.image_width_px),
    }))
}

pub async fn calibrate(ApiJson(req): ApiJson<CalibrateRequest>) -> ApiResult<CalibrationRecord> {
    let f = calibrate_focal_length(req.known_height_m, req.known_distance_m, &req.bbox).map_err(ApiError::invalid)?;
    Ok(Json(CalibrationRecord::now(f)))
}

pub async fn headings(ApiJson(req): ApiJson<HeadingsRequest>) -> ApiResult<HeadingsResponse> {
    Ok(Json(HeadingsResponse {
        tracks: associate_and_heading(&req.frames, &req.config),
    }))
}

pub async fn quantize(ApiJson(req): ApiJson<QuantizeRequest>) -> ApiResult<QuantizeResponse> {
    let tensor = Tensor::new(req.tensor.shape, req.tensor.data).map_err(ApiError::invalid)?;
    let quantized = match req.axis {
        Some(axis) => quantize_per_channel(&tensor, axis, req.bit_width),
        None => quantize_tensor(&tensor, req.bit_width),
    }
    .map_err(ApiError::invalid)?;
    let dequantized = dequantize(&quantized);
    let max_abs_error = tensor
        .data
        .iter()
        .zip(&dequantized.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Json(QuantizeResponse {
        squared_error: round_trip_sse(&tensor, &quantized),
        quantized,
        dequantized,
        max_abs_error,
    }))
}

pub async fn size(ApiJson(req): ApiJson<SizeReportRequest>) -> ApiResult<SizeReport> {
    Ok(Json(
        size_report(&req.layers, req.bit_width).map_err(ApiError::invalid)?,
    ))
}

pub async fn gradient_check(ApiJson(req): ApiJson<GradCheckRequest>) -> ApiResult<GradCheckResponse> {
    let model = TinyTwoHeadModel::new(req.model.shape, req.model.params).map_err(ApiError::invalid)?;
    let err = grad_check(&model, &req.batch, req.lambda, req.alpha, req.step).map_err(ApiError::invalid)?;
    Ok(Json(GradCheckResponse {
        max_relative_error: err,
    }))
}

pub async fn train_model(ApiJson(req): ApiJson<TrainRequest>) -> ApiResult<TrainOutcome> {
    let model = match (req.model, req.shape) {
        (Some(m), _) => TinyTwoHeadModel::new(m.shape, m.params).map_err(ApiError::invalid)?,
        (None, Some(shape)) => TinyTwoHeadModel::init(shape, req.seed),
        (None, None) => {
            return Err(ApiError::new(
                axum::http::StatusCode::BAD_REQUEST,
                "InvalidConfig",
                "give either a model or a shape",
            ))
        }
    };
    let outcome = tokio::task::spawn_blocking(move || train(&model, &req.train, &req.validation, &req.config))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::invalid)?;
    Ok(Json(outcome))
}

pub async fn early_stop(ApiJson(req): ApiJson<EarlyStopRequest>) -> ApiResult<EarlyStopResponse> {
    let mut monitor = EarlyStopMonitor::new(req.patience, req.min_delta);
    let mut decisions = Vec::with_capacity(req.losses.len());
    let mut stop_index = None;
    for (i, &loss) in req.losses.iter().enumerate() {
        let d = monitor.step(loss).map_err(ApiError::invalid)?;
        decisions.push(d);
        if d == StopDecision::Stop {
            stop_index = Some(i);
            break;
        }
    }
    Ok(Json(EarlyStopResponse { decisions, stop_index }))
}

pub async fn describe_scene(ApiJson(req): ApiJson<DescribeRequest>) -> ApiResult<DescribeResponse> {
    let description = describe(&req.objects, &req.config);
    let utterance = normalize_text(&description.text).map_err(ApiError::invalid)?;
    Ok(Json(DescribeResponse { description, utterance }))
}

pub async fn normalize(ApiJson(req): ApiJson<TextBody>) -> ApiResult<TextBody> {
    Ok(Json(TextBody {
        text: normalize_text(&req.text).map_err(ApiError::invalid)?,
    }))
}

pub async fn speech_request(ApiJson(req): ApiJson<SpeechRequest>) -> ApiResult<WireBody> {
    let body = build_request(&req.text, req.speaker_id, &req.prosody).map_err(ApiError::invalid)?;
    Ok(Json(WireBody { body }))
}
