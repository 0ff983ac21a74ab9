//! Monocular ranging from bounding boxes.
//!
//! Under a pinhole model an object of real height `H` at distance `D`
//! projects to `h = H * f / D` pixels, so `D = H * f / h` with `h = y2 - y1`.
//! This module also calibrates `f` from one known observation, classifies
//! horizontal direction by image thirds, and infers heading from how box
//! heights change across the frames of a batch.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{normalize_label, BBox, Detection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("degenerate bounding box: y2 ({y2}) <= y1 ({y1})")]
    DegenerateBBox { y1: f64, y2: f64 },
    #[error("no known height for class {0:?}")]
    UnknownClass(String),
    #[error("{0} must be positive and finite")]
    NonPositiveInput(&'static str),
    #[error("invalid height registry: {0}")]
    Registry(String),
    #[error("invalid calibration record: {0}")]
    Calibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_length_px: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl CameraModel {
    pub fn new(focal_length_px: f64, image_width_px: u32, image_height_px: u32) -> Result<Self, DistanceError> {
        if !(focal_length_px.is_finite() && focal_length_px > 0.0) {
            return Err(DistanceError::NonPositiveInput("focal_length_px"));
        }
        if image_width_px == 0 || image_height_px == 0 {
            return Err(DistanceError::NonPositiveInput("image size"));
        }
        Ok(Self {
            focal_length_px,
            image_width_px,
            image_height_px,
        })
    }
}

/// Known real-world heights in meters, keyed by normalized class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct HeightRegistry {
    heights: BTreeMap<String, f64>,
}

impl Default for HeightRegistry {
    /// Typical adult/vehicle averages; override with a registry file.
    fn default() -> Self {
        let heights = [("person", 1.7), ("car", 1.5), ("bicycle", 1.0), ("dog", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self { heights }
    }
}

impl TryFrom<BTreeMap<String, f64>> for HeightRegistry {
    type Error = DistanceError;

    fn try_from(raw: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        let mut heights = BTreeMap::new();
        for (label, h) in raw {
            if !(h.is_finite() && h > 0.0) {
                return Err(DistanceError::Registry(format!(
                    "height for {label:?} must be positive, got {h}"
                )));
            }
            let key = normalize_label(&label);
            if heights.insert(key.clone(), h).is_some() {
                return Err(DistanceError::Registry(format!("label {key:?} listed twice")));
            }
        }
        Ok(Self { heights })
    }
}

impl From<HeightRegistry> for BTreeMap<String, f64> {
    fn from(r: HeightRegistry) -> Self {
        r.heights
    }
}

impl HeightRegistry {
    pub fn empty() -> Self {
        Self {
            heights: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, label: &str, height_m: f64) -> Result<(), DistanceError> {
        if !(height_m.is_finite() && height_m > 0.0) {
            return Err(DistanceError::NonPositiveInput("known height"));
        }
        self.heights.insert(normalize_label(label), height_m);
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.heights.get(label).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.heights.keys().map(String::as_str)
    }

    pub fn from_json(text: &str) -> Result<Self, DistanceError> {
        serde_json::from_str(text).map_err(|e| DistanceError::Registry(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DistanceError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| DistanceError::Registry(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Persisted focal-length calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub focal_length_px: f64,
    pub calibrated_at: String,
}

impl CalibrationRecord {
    pub fn now(focal_length_px: f64) -> Self {
        Self {
            focal_length_px,
            calibrated_at: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DistanceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DistanceError::Calibration(format!("{}: {e}", path.display())))?;
        let rec: Self = serde_json::from_str(&text).map_err(|e| DistanceError::Calibration(e.to_string()))?;
        if !(rec.focal_length_px.is_finite() && rec.focal_length_px > 0.0) {
            return Err(DistanceError::Calibration("focal_length_px must be positive".into()));
        }
        chrono::DateTime::parse_from_rfc3339(&rec.calibrated_at)
            .map_err(|e| DistanceError::Calibration(format!("calibrated_at: {e}")))?;
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<(), DistanceError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| DistanceError::Calibration(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| DistanceError::Calibration(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    Toward,
    Away,
    Static,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangedObject {
    pub detection: Detection,
    pub distance_m: f64,
    pub direction: Direction,
    pub heading: Heading,
}

pub fn image_height(bbox: &BBox) -> Result<f64, DistanceError> {
    let h = bbox.y2 - bbox.y1;
    if h.is_nan() || h <= 0.0 {
        return Err(DistanceError::DegenerateBBox {
            y1: bbox.y1,
            y2: bbox.y2,
        });
    }
    Ok(h)
}

pub fn estimate_distance(
    bbox: &BBox,
    label: &str,
    registry: &HeightRegistry,
    camera: &CameraModel,
) -> Result<f64, DistanceError> {
    let known = registry
        .get(label)
        .ok_or_else(|| DistanceError::UnknownClass(label.to_string()))?;
    let h = image_height(bbox)?;
    Ok(known * camera.focal_length_px / h)
}

/// Focal length that maps an object of `known_height_m` seen at
/// `known_distance_m` onto `observed`'s pixel height.
pub fn calibrate_focal_length(
    known_height_m: f64,
    known_distance_m: f64,
    observed: &BBox,
) -> Result<f64, DistanceError> {
    if !(known_height_m.is_finite() && known_height_m > 0.0) {
        return Err(DistanceError::NonPositiveInput("known_height_m"));
    }
    if !(known_distance_m.is_finite() && known_distance_m > 0.0) {
        return Err(DistanceError::NonPositiveInput("known_distance_m"));
    }
    let h = image_height(observed)?;
    Ok(known_distance_m * h / known_height_m)
}

/// Thirds rule on the box center; both boundaries belong to `Center`.
pub fn direction_of(bbox: &BBox, image_width_px: u32) -> Direction {
    let w = f64::from(image_width_px);
    let c3 = 3.0 * bbox.center_x();
    if c3 < w {
        Direction::Left
    } else if c3 > 2.0 * w {
        Direction::Right
    } else {
        Direction::Center
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadingConfig {
    pub iou_threshold: f64,
    pub toward_ratio: f64,
    pub away_ratio: f64,
}

impl Default for HeadingConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            toward_ratio: 1.05,
            away_ratio: 0.95,
        }
    }
}

/// One object followed across the frames of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub label: String,
    /// `(frame position, detection index within that frame)`.
    pub observations: Vec<(usize, usize)>,
    pub heights_px: Vec<f64>,
    pub heading: Heading,
}

impl Track {
    pub fn last(&self) -> (usize, usize) {
        *self.observations.last().expect("tracks are never empty")
    }
}

pub fn heading_from_heights(heights: &[f64], cfg: &HeadingConfig) -> Heading {
    match (heights.first(), heights.last()) {
        (Some(&first), Some(&last)) if heights.len() >= 2 => {
            if last >= cfg.toward_ratio * first {
                Heading::Toward
            } else if last <= cfg.away_ratio * first {
                Heading::Away
            } else {
                Heading::Static
            }
        }
        _ => Heading::Unknown,
    }
}

/// Greedy IoU association between consecutive frames.
///
/// Candidate pairs (same label, IoU at or above the threshold) are matched
/// in descending IoU order, each detection at most once. Unmatched
/// detections open new tracks; a track that misses a frame is closed.
pub fn associate_and_heading(frames: &[Vec<Detection>], cfg: &HeadingConfig) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut alive: Vec<usize> = Vec::new();

    for (pos, dets) in frames.iter().enumerate() {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &t in &alive {
            let (fp, di) = tracks[t].last();
            let prev = &frames[fp][di];
            for (j, d) in dets.iter().enumerate() {
                if d.label != prev.label {
                    continue;
                }
                let iou = prev.bbox.iou(&d.bbox);
                if iou >= cfg.iou_threshold {
                    pairs.push((iou, t, j));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_used = vec![false; tracks.len()];
        let mut det_used = vec![false; dets.len()];
        let mut next_alive = Vec::new();
        for (_, t, j) in pairs {
            if track_used[t] || det_used[j] {
                continue;
            }
            track_used[t] = true;
            det_used[j] = true;
            tracks[t].observations.push((pos, j));
            tracks[t].heights_px.push(dets[j].bbox.height());
            next_alive.push(t);
        }
        for (j, d) in dets.iter().enumerate() {
            if !det_used[j] {
                tracks.push(Track {
                    label: d.label.clone(),
                    observations: vec![(pos, j)],
                    heights_px: vec![d.bbox.height()],
                    heading: Heading::Unknown,
                });
                next_alive.push(tracks.len() - 1);
            }
        }
        alive = next_alive;
    }

    for t in &mut tracks {
        t.heading = heading_from_heights(&t.heights_px, cfg);
    }
    tracks
}

/// Ranges the detections of the last frame, attaching each one's track
/// heading. Detections with unregistered labels are returned separately.
pub fn range_last_frame(
    frames: &[Vec<Detection>],
    tracks: &[Track],
    registry: &HeightRegistry,
    camera: &CameraModel,
) -> (Vec<RangedObject>, Vec<DistanceError>) {
    let Some(last_pos) = frames.len().checked_sub(1) else {
        return (Vec::new(), Vec::new());
    };
    let mut objects = Vec::new();
    let mut errors = Vec::new();
    for (j, det) in frames[last_pos].iter().enumerate() {
        let heading = tracks
            .iter()
            .find(|t| t.last() == (last_pos, j))
            .map_or(Heading::Unknown, |t| t.heading);
        match estimate_distance(&det.bbox, &det.label, registry, camera) {
            Ok(distance_m) => objects.push(RangedObject {
                detection: det.clone(),
                distance_m,
                direction: direction_of(&det.bbox, camera.image_width_px),
                heading,
            }),
            Err(e) => errors.push(e),
        }
    }
    (objects, errors)
}
