use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::describer::DescriberConfig;
use crate::distance::HeadingConfig;
use crate::scheduler::SchedulerConfig;
use crate::tts::{Prosody, SPEAKER_COUNT};

/// Focal length used when neither a value nor a calibration record is configured.
pub const DEFAULT_FOCAL_LENGTH_PX: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub scheduler: SchedulerConfig,
    pub source: SourceConfig,
    pub perception: PerceptionConfig,
    pub distance: DistanceConfig,
    pub describer: DescriberConfig,
    pub tts: TtsConfig,
}

/// Cadence and geometry of the frame source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub fps: f64,
    /// Length of the synthetic source.
    pub synthetic_frames: u64,
    pub width_px: u32,
    pub height_px: u32,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            fps: 2.0,
            synthetic_frames: 30,
            width_px: 1280,
            height_px: 720,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionConfig {
    pub backend_url: Option<String>,
    /// Scripted detections; takes precedence over `backend_url`.
    pub mock_script: Option<PathBuf>,
    pub min_confidence: f64,
    pub timeout_ms: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            backend_url: None,
            mock_script: None,
            min_confidence: 0.5,
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceConfig {
    /// Per-class heights; built-in table when absent.
    pub height_registry: Option<PathBuf>,
    pub focal_length_px: Option<f64>,
    pub calibration: Option<PathBuf>,
    pub heading: HeadingConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtsConfig {
    pub endpoint: Option<String>,
    pub speaker_id: u32,
    pub prosody: Prosody,
    pub dry_run: bool,
}

fn violation(key: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::SchemaViolation {
        key: key.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    /// Parses and validates; relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            violation(&offending_key(&path, &message), message)
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base_dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        };
        fix(&mut self.perception.mock_script);
        fix(&mut self.distance.height_registry);
        fix(&mut self.distance.calibration);
    }

    /// Range checks and file existence.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scheduler
            .validate()
            .map_err(|e| violation("scheduler", e.to_string()))?;

        let s = &self.source;
        if !(s.fps.is_finite() && s.fps > 0.0) {
            return Err(violation("source.fps", "must be > 0"));
        }
        if s.width_px == 0 || s.height_px == 0 {
            return Err(violation("source", "frame dimensions must be positive"));
        }

        let p = &self.perception;
        if !(0.0..=1.0).contains(&p.min_confidence) {
            return Err(violation("perception.min_confidence", "must be within [0, 1]"));
        }
        if p.timeout_ms == 0 {
            return Err(violation("perception.timeout_ms", "must be positive"));
        }

        let d = &self.distance;
        if let Some(f) = d.focal_length_px {
            if !(f.is_finite() && f > 0.0) {
                return Err(violation("distance.focal_length_px", "must be > 0"));
            }
            if d.calibration.is_some() {
                return Err(violation(
                    "distance.calibration",
                    "give either focal_length_px or calibration, not both",
                ));
            }
        }
        let h = &d.heading;
        if !(h.iou_threshold > 0.0 && h.iou_threshold <= 1.0) {
            return Err(violation("distance.heading.iou_threshold", "must be within (0, 1]"));
        }
        if !(h.toward_ratio >= 1.0 && h.toward_ratio.is_finite()) {
            return Err(violation("distance.heading.toward_ratio", "must be >= 1"));
        }
        if !(h.away_ratio > 0.0 && h.away_ratio <= 1.0) {
            return Err(violation("distance.heading.away_ratio", "must be within (0, 1]"));
        }

        let desc = &self.describer;
        if !(desc.band_width_m.is_finite() && desc.band_width_m >= 0.0) {
            return Err(violation("describer.band_width_m", "must be >= 0"));
        }
        if desc.max_groups == 0 {
            return Err(violation("describer.max_groups", "must be at least 1"));
        }

        let t = &self.tts;
        if t.speaker_id >= SPEAKER_COUNT {
            return Err(violation(
                "tts.speaker_id",
                format!("{} outside 0..={}", t.speaker_id, SPEAKER_COUNT - 1),
            ));
        }
        t.prosody
            .validate()
            .map_err(|e| violation("tts.prosody", e.to_string()))?;

        for path in [&p.mock_script, &d.height_registry, &d.calibration]
            .into_iter()
            .flatten()
        {
            if !path.is_file() {
                return Err(PipelineError::FileNotFound(path.clone()));
            }
        }
        Ok(())
    }
}

// The path already ends in the unknown field's name when that is the problem.
fn offending_key(path: &str, message: &str) -> String {
    if path != "." {
        return path.to_string();
    }
    message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .unwrap_or("<root>")
        .to_string()
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::FileNotFound(path.to_path_buf()),
        _ => PipelineError::Io(format!("{}: {e}", path.display())),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    PipelineConfig::from_json(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "heights.json", r#"{"person": 1.7}"#);
        let cfg = write(
            dir.path(),
            "cfg.json",
            r#"{"perception": {"backend_url": "http://127.0.0.1:9"}, "distance": {"height_registry": "heights.json"}}"#,
        );
        let c = load_config(&cfg).unwrap();
        assert_eq!(c.scheduler.cycle_period_ms, 5000);
        assert_eq!(c.scheduler.frame_spacing_ms, 500);
        assert_eq!(c.scheduler.frames_per_batch, 3);
        assert_eq!(c.distance.height_registry.unwrap(), dir.path().join("heights.json"));
        assert_eq!(c.tts.speaker_id, 0);
    }

    #[test]
    fn speaker_out_of_range() {
        let err = PipelineConfig::from_json(r#"{"tts": {"speaker_id": 40}}"#, Path::new(".")).unwrap_err();
        assert!(
            matches!(err, PipelineError::SchemaViolation { ref key, .. } if key == "tts.speaker_id"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::from_json(r#"{"speed": 3}"#, Path::new(".")).unwrap_err();
        assert!(
            matches!(err, PipelineError::SchemaViolation { ref key, .. } if key == "speed"),
            "{err}"
        );
        let err = PipelineConfig::from_json(r#"{"tts": {"speed": 3}}"#, Path::new(".")).unwrap_err();
        assert!(
            matches!(err, PipelineError::SchemaViolation { ref key, .. } if key == "tts.speed"),
            "{err}"
        );
    }

    #[test]
    fn type_errors_name_the_key() {
        let err =
            PipelineConfig::from_json(r#"{"scheduler": {"cycle_period_ms": "soon"}}"#, Path::new(".")).unwrap_err();
        assert!(
            matches!(err, PipelineError::SchemaViolation { ref key, .. } if key == "scheduler.cycle_period_ms"),
            "{err}"
        );
    }

    #[test]
    fn missing_referenced_file() {
        let dir = tempfile::tempdir().unwrap();
        let err =
            PipelineConfig::from_json(r#"{"distance": {"height_registry": "nope.json"}}"#, dir.path()).unwrap_err();
        assert_eq!(err, PipelineError::FileNotFound(dir.path().join("nope.json")));
        assert!(matches!(
            load_config(&dir.path().join("absent.json")),
            Err(PipelineError::FileNotFound(_))
        ));
    }

    #[test]
    fn focal_and_calibration_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "cal.json", "{}");
        let err = PipelineConfig::from_json(
            r#"{"distance": {"focal_length_px": 900, "calibration": "cal.json"}}"#,
            dir.path(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::SchemaViolation { ref key, .. } if key == "distance.calibration"));
    }
}
