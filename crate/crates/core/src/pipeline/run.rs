use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CycleMetrics, PipelineConfig, PipelineError, SourceConfig, DEFAULT_FOCAL_LENGTH_PX};
use crate::describer::{describe, DescriberConfig, SceneDescription};
use crate::distance::{
    associate_and_heading, range_last_frame, CalibrationRecord, CameraModel, HeadingConfig, HeightRegistry,
    RangedObject,
};
use crate::perception::{
    filter_confident, Detection, DetectionScript, Detector, HttpDetector, PerceptionError, ScriptedDetector,
};
use crate::scheduler::{
    Clock, DirectorySource, FrameBatch, FrameScheduler, FrameSource, ScheduleError, Shutdown, SyntheticSource,
};
use crate::tts::{normalize_text, DispatchStats, HttpTtsTransport, Prosody, TtsDispatcher, TtsTransport, Utterance};

/// How long a finished run waits for the last utterance to go out.
const FINAL_UTTERANCE_TIMEOUT: Duration = Duration::from_secs(10);

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Everything one cycle needs. `tts: None` means dry-run.
pub struct CycleDeps<'a> {
    pub detector: &'a dyn Detector,
    pub registry: &'a HeightRegistry,
    pub focal_length_px: f64,
    pub min_confidence: f64,
    pub heading: &'a HeadingConfig,
    pub describer: &'a DescriberConfig,
    pub speaker_id: u32,
    pub prosody: Prosody,
    pub tts: Option<&'a TtsDispatcher>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub description: SceneDescription,
    /// Normalized text handed to speech (or printed in dry-run).
    pub utterance: String,
    pub objects: Vec<RangedObject>,
    pub failed_frames: Vec<u64>,
    pub metrics: CycleMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedCycle {
    pub errors: Vec<PerceptionError>,
    pub metrics: CycleMetrics,
}

impl std::fmt::Display for DroppedCycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", PipelineError::AllFramesFailed)
    }
}

impl std::error::Error for DroppedCycle {}

/// Runs one batch through detection, ranging, description and speech.
///
/// Frames whose detect call fails are left out; headings and ranges use
/// whatever frames remain, and distances come from the last of them.
pub fn run_cycle(
    batch: &FrameBatch,
    deps: &CycleDeps<'_>,
    cycle_index: u64,
    acquire_ms: f64,
    now_ms: u64,
) -> Result<CycleReport, DroppedCycle> {
    let start = Instant::now();
    let mut metrics = CycleMetrics {
        cycle_index,
        acquire_ms,
        detect_ms: 0.0,
        range_ms: 0.0,
        describe_ms: 0.0,
        tts_dispatch_ms: 0.0,
        end_to_end_ms: 0.0,
        dropped: false,
    };

    let t = Instant::now();
    let mut per_frame: Vec<Vec<Detection>> = Vec::with_capacity(batch.frames.len());
    let mut anchor = None;
    let mut errors = Vec::new();
    let mut failed_frames = Vec::new();
    for frame in &batch.frames {
        match deps.detector.detect(frame) {
            Ok(dets) => {
                per_frame.push(filter_confident(dets, deps.min_confidence));
                anchor = Some(frame);
            }
            Err(e) => {
                tracing::warn!(frame_id = frame.frame_id, error = %e, "detect failed; frame skipped");
                failed_frames.push(frame.frame_id);
                errors.push(e);
            }
        }
    }
    metrics.detect_ms = ms_since(t);
    let Some(anchor) = anchor else {
        metrics.dropped = true;
        metrics.end_to_end_ms = acquire_ms + ms_since(start);
        return Err(DroppedCycle { errors, metrics });
    };

    let t = Instant::now();
    let tracks = associate_and_heading(&per_frame, deps.heading);
    let objects = match CameraModel::new(deps.focal_length_px, anchor.width_px, anchor.height_px) {
        Ok(camera) => {
            let (objects, skipped) = range_last_frame(&per_frame, &tracks, deps.registry, &camera);
            for e in skipped {
                tracing::debug!(error = %e, "detection not ranged");
            }
            objects
        }
        Err(e) => {
            tracing::warn!(error = %e, "no usable camera model");
            Vec::new()
        }
    };
    metrics.range_ms = ms_since(t);

    let t = Instant::now();
    let description = describe(&objects, deps.describer);
    let utterance = normalize_text(&description.text).unwrap_or_else(|_| deps.describer.templates.empty.clone());
    metrics.describe_ms = ms_since(t);

    let t = Instant::now();
    if let Some(tts) = deps.tts {
        match Utterance::new(utterance.clone(), deps.speaker_id, deps.prosody, now_ms) {
            Ok(u) => {
                tts.enqueue(u);
            }
            Err(e) => tracing::warn!(error = %e, "utterance rejected"),
        }
    }
    metrics.tts_dispatch_ms = ms_since(t);
    metrics.end_to_end_ms = acquire_ms + ms_since(start);

    Ok(CycleReport {
        description,
        utterance,
        objects,
        failed_frames,
        metrics,
    })
}

/// Callbacks while a run progresses.
pub trait RunObserver {
    /// Called once per cycle, dropped ones included (with `utterance: None`).
    fn on_cycle(&mut self, metrics: &CycleMetrics, utterance: Option<&str>);
}

pub struct NoopObserver;

impl RunObserver for NoopObserver {
    fn on_cycle(&mut self, _: &CycleMetrics, _: Option<&str>) {}
}

impl<F: FnMut(&CycleMetrics, Option<&str>)> RunObserver for F {
    fn on_cycle(&mut self, metrics: &CycleMetrics, utterance: Option<&str>) {
        self(metrics, utterance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SourceExhausted,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Cycles with a metrics record, dropped ones included.
    pub cycles: u64,
    pub dropped: u64,
    /// One normalized utterance per completed cycle.
    pub transcript: Vec<String>,
    pub metrics: Vec<CycleMetrics>,
    pub tts: Option<DispatchStats>,
    pub stop: StopReason,
}

/// Initialized dependencies for a run.
pub struct Pipeline {
    cfg: PipelineConfig,
    detector: Box<dyn Detector>,
    registry: HeightRegistry,
    focal_length_px: f64,
    transport: Option<Box<dyn TtsTransport>>,
}

fn init_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::InitializationError(msg.into())
}

/// Checks that something accepts TCP connections at the URL's host and port.
fn probe(url: &str, timeout: Duration) -> Result<(), PipelineError> {
    let parsed = reqwest::Url::parse(url).map_err(|e| init_err(format!("bad backend url {url}: {e}")))?;
    let host = parsed
        .host_str()
        .ok_or_else(|| init_err(format!("backend url {url} has no host")))?;
    let port = parsed
        .port_or_known_default()
        .ok_or_else(|| init_err(format!("backend url {url} has no port")))?;
    let addrs = (host, port)
        .to_socket_addrs()
        .map_err(|e| init_err(format!("cannot resolve {host}: {e}")))?;
    for addr in addrs {
        if TcpStream::connect_timeout(&addr, timeout).is_ok() {
            return Ok(());
        }
    }
    Err(init_err(format!("detector backend unreachable at {url}")))
}

impl Pipeline {
    /// Loads files and connects backends named in the config.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let detector: Box<dyn Detector> = match (&cfg.perception.mock_script, &cfg.perception.backend_url) {
            (Some(path), _) => {
                let script = DetectionScript::load(path).map_err(|e| init_err(e.to_string()))?;
                Box::new(ScriptedDetector::new(script))
            }
            (None, Some(url)) => {
                let timeout = Duration::from_millis(cfg.perception.timeout_ms);
                probe(url, timeout.min(Duration::from_secs(2)))?;
                Box::new(HttpDetector::new(url.clone()).with_timeout(timeout))
            }
            (None, None) => {
                return Err(init_err(
                    "no detector configured: set perception.backend_url or a mock script",
                ))
            }
        };
        let transport: Option<Box<dyn TtsTransport>> = if cfg.tts.dry_run {
            None
        } else {
            let endpoint = cfg
                .tts
                .endpoint
                .as_deref()
                .ok_or_else(|| init_err("tts.endpoint is required unless dry_run is set"))?;
            Some(Box::new(HttpTtsTransport::new(endpoint)))
        };
        Self::with_parts(cfg, detector, transport)
    }

    /// Uses the given detector and speech transport; registry and focal
    /// length still come from `cfg`. `transport: None` means dry-run.
    pub fn with_parts(
        cfg: &PipelineConfig,
        detector: Box<dyn Detector>,
        transport: Option<Box<dyn TtsTransport>>,
    ) -> Result<Self, PipelineError> {
        let registry = match &cfg.distance.height_registry {
            Some(path) => HeightRegistry::load(path).map_err(|e| init_err(format!("height registry: {e}")))?,
            None => HeightRegistry::default(),
        };
        let focal_length_px = match (cfg.distance.focal_length_px, &cfg.distance.calibration) {
            (Some(f), _) => f,
            (None, Some(path)) => {
                CalibrationRecord::load(path)
                    .map_err(|e| init_err(format!("calibration: {e}")))?
                    .focal_length_px
            }
            (None, None) => DEFAULT_FOCAL_LENGTH_PX,
        };
        Ok(Self {
            cfg: cfg.clone(),
            detector,
            registry,
            focal_length_px,
            transport,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Loops until the source runs out or `shutdown` fires. A cycle already
    /// under way completes; once shutdown is seen nothing further is spoken.
    pub fn run(
        self,
        source: &mut dyn FrameSource,
        clock: &dyn Clock,
        shutdown: &Shutdown,
        observer: &mut dyn RunObserver,
    ) -> Result<RunSummary, PipelineError> {
        let Pipeline {
            cfg,
            detector,
            registry,
            focal_length_px,
            transport,
        } = self;
        let mut scheduler = FrameScheduler::new(cfg.scheduler.clone())?;
        let dispatcher = transport.map(TtsDispatcher::spawn);
        let deps = CycleDeps {
            detector: detector.as_ref(),
            registry: &registry,
            focal_length_px,
            min_confidence: cfg.perception.min_confidence,
            heading: &cfg.distance.heading,
            describer: &cfg.describer,
            speaker_id: cfg.tts.speaker_id,
            prosody: cfg.tts.prosody,
            tts: dispatcher.as_ref(),
        };

        let mut summary = RunSummary {
            cycles: 0,
            dropped: 0,
            transcript: Vec::new(),
            metrics: Vec::new(),
            tts: None,
            stop: StopReason::SourceExhausted,
        };
        let mut record = |summary: &mut RunSummary, m: CycleMetrics, utterance: Option<String>| {
            observer.on_cycle(&m, utterance.as_deref());
            summary.cycles += 1;
            if m.dropped {
                summary.dropped += 1;
            }
            summary.metrics.push(m);
            if let Some(u) = utterance {
                summary.transcript.push(u);
            }
        };

        let outcome = loop {
            if shutdown.is_triggered() {
                break Ok(StopReason::Shutdown);
            }
            let skipped_before = scheduler.dropped_cycles();
            let t = Instant::now();
            let next = scheduler.next_batch(source, clock);
            let acquire_ms = ms_since(t);
            for _ in skipped_before..scheduler.dropped_cycles() {
                let m = CycleMetrics::dropped(summary.cycles);
                record(&mut summary, m, None);
            }
            let batch = match next {
                Ok(b) => b,
                Err(ScheduleError::SourceExhausted) => break Ok(StopReason::SourceExhausted),
                Err(ScheduleError::Interrupted) => break Ok(StopReason::Shutdown),
                Err(e) => break Err(PipelineError::from(e)),
            };
            match run_cycle(&batch, &deps, summary.cycles, acquire_ms, clock.now_ms()) {
                Ok(report) => {
                    tracing::info!(
                        cycle = report.metrics.cycle_index,
                        text = %report.utterance,
                        "cycle complete"
                    );
                    record(&mut summary, report.metrics, Some(report.utterance));
                }
                Err(dropped) => {
                    tracing::warn!(cycle = dropped.metrics.cycle_index, "{dropped}");
                    record(&mut summary, dropped.metrics, None);
                }
            }
        };

        summary.tts = dispatcher.map(|d| match outcome {
            Ok(StopReason::SourceExhausted) => d.finish(FINAL_UTTERANCE_TIMEOUT),
            _ => d.abort(),
        });
        summary.stop = outcome?;
        Ok(summary)
    }
}

/// `"synthetic"` or a directory of frame images.
pub fn open_source(source: &str, cfg: &SourceConfig) -> Result<Box<dyn FrameSource>, PipelineError> {
    if source == "synthetic" {
        let src = SyntheticSource::new(cfg.synthetic_frames, cfg.fps, cfg.width_px, cfg.height_px)?;
        return Ok(Box::new(src));
    }
    let dir = Path::new(source);
    if !dir.is_dir() {
        return Err(PipelineError::FileNotFound(dir.to_path_buf()));
    }
    Ok(Box::new(DirectorySource::open(dir, cfg.fps)?))
}
