//! Detection types and detector backends.
//!
//! A [`Detector`] turns a [`Frame`] into labeled bounding boxes. Two
//! backends ship here: [`HttpDetector`] speaks the JSON detector protocol
//! (`POST /detect`) and [`ScriptedDetector`] replays a [`DetectionScript`].
//! Labels are normalized to lowercase singular on the way in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scheduler::Frame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("detector backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("malformed detector response: {0}")]
    MalformedResponse(String),
    #[error("invalid bounding box {bbox:?} for a {width}x{height} frame")]
    InvalidBBox { bbox: [f64; 4], width: u32, height: u32 },
    #[error("invalid confidence {0}")]
    InvalidConfidence(f64),
    #[error("failed to read detection script: {0}")]
    ScriptIo(String),
    #[error("invalid detection script: {0}")]
    ScriptParse(String),
}

/// Axis-aligned box in pixel coordinates, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center_x(&self) -> f64 {
        (self.x1 + self.x2) / 2.0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let iy = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Checks `0 <= x1 < x2 <= width` and `0 <= y1 < y2 <= height`.
    pub fn within(&self, width: u32, height: u32) -> bool {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        finite
            && 0.0 <= self.x1
            && self.x1 < self.x2
            && self.x2 <= f64::from(width)
            && 0.0 <= self.y1
            && self.y1 < self.y2
            && self.y2 <= f64::from(height)
    }

    /// Shape-only check, for callers that do not know the frame size.
    pub fn is_well_ordered(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 >= 0.0
            && self.y1 >= 0.0
            && self.x1 < self.x2
            && self.y1 < self.y2
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn new(label: impl AsRef<str>, confidence: f64, bbox: BBox) -> Self {
        Self {
            label: normalize_label(label.as_ref()),
            confidence,
            bbox,
        }
    }

    /// Rejects (never clamps) out-of-range values.
    pub fn validate(&self, width: u32, height: u32) -> Result<(), PerceptionError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(PerceptionError::InvalidConfidence(self.confidence));
        }
        if !self.bbox.within(width, height) {
            return Err(PerceptionError::InvalidBBox {
                bbox: self.bbox.into(),
                width,
                height,
            });
        }
        Ok(())
    }
}

const IRREGULAR_SINGULARS: &[(&str, &str)] = &[
    ("women", "woman"),
    ("men", "man"),
    ("people", "person"),
    ("persons", "person"),
    ("children", "child"),
    ("feet", "foot"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("sheep", "sheep"),
    ("buses", "bus"),
];

/// Lowercase, trimmed, singular form of a class label.
pub fn normalize_label(raw: &str) -> String {
    let word = raw.trim().to_lowercase();
    if let Some((_, singular)) = IRREGULAR_SINGULARS.iter().find(|(p, _)| *p == word) {
        return (*singular).to_string();
    }
    if word.len() > 3 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    for suffix in ["ches", "shes", "sses", "xes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is")
    {
        return word[..word.len() - 1].to_string();
    }
    word
}

/// Anything that can turn a frame into detections.
pub trait Detector: Send + Sync {
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError>;
}

/// Frame id to scripted detections. Duplicate frame ids in a script file
/// are rejected at load time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionScript {
    frames: BTreeMap<u64, Vec<Detection>>,
}

impl DetectionScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_id: u64, detections: Vec<Detection>) -> Result<(), PerceptionError> {
        if self.frames.contains_key(&frame_id) {
            return Err(PerceptionError::ScriptParse(format!("duplicate frame id {frame_id}")));
        }
        self.frames.insert(frame_id, detections);
        Ok(())
    }

    pub fn get(&self, frame_id: u64) -> Option<&[Detection]> {
        self.frames.get(&frame_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, PerceptionError> {
        let script: DetectionScript =
            serde_json::from_str(text).map_err(|e| PerceptionError::ScriptParse(e.to_string()))?;
        for (id, dets) in &script.frames {
            for d in dets {
                if !(0.0..=1.0).contains(&d.confidence) || !d.bbox.is_well_ordered() {
                    return Err(PerceptionError::ScriptParse(format!(
                        "frame {id}: detection {:?} violates box or confidence range",
                        d
                    )));
                }
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PerceptionError::ScriptIo(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Serialize for DetectionScript {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &Vec<Detection>> = self.frames.iter().map(|(k, v)| (k.to_string(), v)).collect();
        keyed.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DetectionScript {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ScriptVisitor;

        impl<'de> Visitor<'de> for ScriptVisitor {
            type Value = DetectionScript;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping frame ids to detection lists")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut script = DetectionScript::new();
                while let Some(key) = map.next_key::<String>()? {
                    let id: u64 = key
                        .parse()
                        .map_err(|_| serde::de::Error::custom(format!("frame id {key:?} is not an integer")))?;
                    let raw: Vec<Detection> = map.next_value()?;
                    let dets = raw
                        .into_iter()
                        .map(|d| Detection::new(&d.label, d.confidence, d.bbox))
                        .collect();
                    script.insert(id, dets).map_err(serde::de::Error::custom)?;
                }
                Ok(script)
            }
        }

        deserializer.deserialize_map(ScriptVisitor)
    }
}

/// Scripted stand-in for a detector backend.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDetector {
    script: DetectionScript,
}

impl ScriptedDetector {
    pub fn new(script: DetectionScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &DetectionScript {
        &self.script
    }
}

/// Pure lookup; unscripted frames see nothing.
pub fn mock_detect(frame: &Frame, script: &DetectionScript) -> Vec<Detection> {
    script.get(frame.frame_id).map(<[_]>::to_vec).unwrap_or_default()
}

impl Detector for ScriptedDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError> {
        Ok(mock_detect(frame, &self.script))
    }
}

/// Body of `POST /detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectRequest {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    pub image_path: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectResponse {
    detections: Vec<Detection>,
}

/// Decodes a detector reply. Any non-200 status or schema violation is a
/// `MalformedResponse`; boxes outside the frame are `InvalidBBox`.
pub fn parse_detect_response(
    status: u16,
    body: &str,
    width: u32,
    height: u32,
) -> Result<Vec<Detection>, PerceptionError> {
    if status != 200 {
        return Err(PerceptionError::MalformedResponse(format!("status {status}")));
    }
    let resp: DetectResponse =
        serde_json::from_str(body).map_err(|e| PerceptionError::MalformedResponse(e.to_string()))?;
    resp.detections
        .into_iter()
        .map(|d| {
            if d.label.trim().is_empty() {
                return Err(PerceptionError::MalformedResponse("empty label".into()));
            }
            let d = Detection::new(&d.label, d.confidence, d.bbox);
            d.validate(width, height)?;
            Ok(d)
        })
        .collect()
}

/// Client for an external detector speaking `POST /detect`.
#[derive(Debug, Clone)]
pub struct HttpDetector {
    base_url: String,
    timeout: Duration,
}

impl HttpDetector {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(10),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn client(&self) -> Result<reqwest::blocking::Client, PerceptionError> {
        reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| PerceptionError::BackendUnreachable(e.to_string()))
    }
}

impl Detector for HttpDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError> {
        let req = DetectRequest {
            frame_id: frame.frame_id,
            width: frame.width_px,
            height: frame.height_px,
            image_path: frame.payload.describe(),
        };
        // One client per call: connections are never shared between concurrent detects.
        let resp = self
            .client()?
            .post(format!("{}/detect", self.base_url))
            .json(&req)
            .send()
            .map_err(|e| PerceptionError::BackendUnreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| PerceptionError::MalformedResponse(e.to_string()))?;
        parse_detect_response(status, &body, frame.width_px, frame.height_px)
    }
}

/// Keeps detections at or above `min_confidence`.
pub fn filter_confident(detections: Vec<Detection>, min_confidence: f64) -> Vec<Detection> {
    detections
        .into_iter()
        .filter(|d| d.confidence >= min_confidence)
        .collect()
}
