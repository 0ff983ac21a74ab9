//! Frame acquisition on a fixed cadence.
//!
//! Every cycle the scheduler samples `frames_per_batch` frames spaced
//! `frame_spacing_ms` apart, then waits for the next `cycle_period_ms`
//! boundary. Time comes from an injected [`Clock`], so tests can run the
//! cadence on a [`SimulatedClock`] with exact timing.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::handoff::Handoff;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("frame source exhausted")]
    SourceExhausted,
    #[error("clock went backwards: {previous_ms} ms then {now_ms} ms")]
    ClockRegression { previous_ms: u64, now_ms: u64 },
    #[error("frame source error: {0}")]
    Source(String),
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(String),
    #[error("interrupted by shutdown")]
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FramePayload {
    Path { path: PathBuf },
    Synthetic { index: u64 },
}

impl FramePayload {
    /// String form used on the detector wire (`image_path`).
    pub fn describe(&self) -> String {
        match self {
            FramePayload::Path { path } => path.display().to_string(),
            FramePayload::Synthetic { index } => format!("synthetic://{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: u64,
    pub timestamp_ms: u64,
    pub width_px: u32,
    pub height_px: u32,
    pub payload: FramePayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBatch {
    pub cycle_index: u64,
    pub cycle_start_ms: u64,
    pub frames: Vec<Frame>,
}

/// Monotonic millisecond clock.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;

    /// Returns `false` if the wait was cut short by shutdown.
    fn sleep_until(&self, deadline_ms: u64) -> bool;

    fn is_simulated(&self) -> bool {
        false
    }
}

/// Clock whose time only moves when someone sleeps or advances it.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    now: AtomicU64,
}

impl SimulatedClock {
    pub fn new(start_ms: u64) -> Self {
        Self {
            now: AtomicU64::new(start_ms),
        }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.now.store(ms, Ordering::SeqCst);
    }
}

impl Clock for SimulatedClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline_ms: u64) -> bool {
        self.now.fetch_max(deadline_ms, Ordering::SeqCst);
        true
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

/// Shared stop flag with a condition variable so sleepers wake promptly.
#[derive(Debug, Clone, Default)]
pub struct Shutdown {
    inner: Arc<(Mutex<bool>, Condvar)>,
}

impl Shutdown {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trigger(&self) {
        let (lock, cv) = &*self.inner;
        *lock.lock().unwrap() = true;
        cv.notify_all();
    }

    pub fn is_triggered(&self) -> bool {
        *self.inner.0.lock().unwrap()
    }

    /// Waits up to `timeout`; returns `true` if shutdown was triggered.
    pub fn wait_timeout(&self, timeout: Duration) -> bool {
        let (lock, cv) = &*self.inner;
        let guard = lock.lock().unwrap();
        let (guard, _) = cv.wait_timeout_while(guard, timeout, |stop| !*stop).unwrap();
        *guard
    }
}

/// Real monotonic time, measured from construction.
#[derive(Debug)]
pub struct WallClock {
    origin: Instant,
    shutdown: Option<Shutdown>,
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
            shutdown: None,
        }
    }

    pub fn with_shutdown(shutdown: Shutdown) -> Self {
        Self {
            origin: Instant::now(),
            shutdown: Some(shutdown),
        }
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_until(&self, deadline_ms: u64) -> bool {
        let now = self.now_ms();
        if deadline_ms <= now {
            return true;
        }
        let wait = Duration::from_millis(deadline_ms - now);
        match &self.shutdown {
            Some(s) => !s.wait_timeout(wait),
            None => {
                std::thread::sleep(wait);
                true
            }
        }
    }
}

/// Source of frames sampled at a given clock time.
pub trait FrameSource: Send {
    /// The frame current at `now_ms`. The frame is stamped with `now_ms`.
    fn grab(&mut self, now_ms: u64) -> Result<Frame, ScheduleError>;
}

/// Maps clock time onto a fixed-rate sequence of `count` frames, anchored
/// at the first grab.
#[derive(Debug, Clone)]
struct Timeline {
    fps: f64,
    count: u64,
    origin_ms: Option<u64>,
}

impl Timeline {
    fn new(fps: f64, count: u64) -> Result<Self, ScheduleError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(ScheduleError::InvalidConfig(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            fps,
            count,
            origin_ms: None,
        })
    }

    fn index_at(&mut self, now_ms: u64) -> Result<u64, ScheduleError> {
        let origin = *self.origin_ms.get_or_insert(now_ms);
        let elapsed = now_ms.saturating_sub(origin) as f64;
        let index = (elapsed * self.fps / 1000.0 + 1e-9).floor() as u64;
        if index >= self.count {
            return Err(ScheduleError::SourceExhausted);
        }
        Ok(index)
    }
}

/// In-memory generator of blank frames, for tests and dry runs.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    timeline: Timeline,
    width_px: u32,
    height_px: u32,
}

impl SyntheticSource {
    pub fn new(frame_count: u64, fps: f64, width_px: u32, height_px: u32) -> Result<Self, ScheduleError> {
        if width_px == 0 || height_px == 0 {
            return Err(ScheduleError::InvalidConfig("frame dimensions must be positive".into()));
        }
        Ok(Self {
            timeline: Timeline::new(fps, frame_count)?,
            width_px,
            height_px,
        })
    }
}

impl FrameSource for SyntheticSource {
    fn grab(&mut self, now_ms: u64) -> Result<Frame, ScheduleError> {
        let index = self.timeline.index_at(now_ms)?;
        Ok(Frame {
            frame_id: index,
            timestamp_ms: now_ms,
            width_px: self.width_px,
            height_px: self.height_px,
            payload: FramePayload::Synthetic { index },
        })
    }
}

/// Directory of numbered image files played back at `fps`.
///
/// Files are ordered by the first run of digits in their name; the frame id
/// is that number. Dimensions come from the image header unless overridden.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    files: Vec<(u64, PathBuf)>,
    timeline: Timeline,
    size_override: Option<(u32, u32)>,
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

impl DirectorySource {
    pub fn open(dir: &Path, fps: f64) -> Result<Self, ScheduleError> {
        let entries = std::fs::read_dir(dir).map_err(|e| ScheduleError::Source(format!("{}: {e}", dir.display())))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| ScheduleError::Source(e.to_string()))?.path();
            if !path.is_file() {
                continue;
            }
            if let Some(n) = frame_number(&path) {
                files.push((n, path));
            }
        }
        files.sort();
        if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(ScheduleError::Source(format!("duplicate frame number {}", w[0].0)));
        }
        let count = files.len() as u64;
        Ok(Self {
            files,
            timeline: Timeline::new(fps, count)?,
            size_override: None,
        })
    }

    pub fn with_size(mut self, width_px: u32, height_px: u32) -> Self {
        self.size_override = Some((width_px, height_px));
        self
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for DirectorySource {
    fn grab(&mut self, now_ms: u64) -> Result<Frame, ScheduleError> {
        let index = self.timeline.index_at(now_ms)? as usize;
        let (frame_id, path) = self.files[index].clone();
        let (width_px, height_px) = match self.size_override {
            Some(size) => size,
            None => {
                image::image_dimensions(&path).map_err(|e| ScheduleError::Source(format!("{}: {e}", path.display())))?
            }
        };
        if width_px == 0 || height_px == 0 {
            return Err(ScheduleError::Source(format!("{}: empty image", path.display())));
        }
        Ok(Frame {
            frame_id,
            timestamp_ms: now_ms,
            width_px,
            height_px,
            payload: FramePayload::Path { path },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub frames_per_batch: usize,
    pub frame_spacing_ms: u64,
    pub cycle_period_ms: u64,
    /// Wall-clock only; simulated clocks are held to exact timing.
    pub spacing_tolerance_ms: u64,
    pub cycle_tolerance_ms: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            frames_per_batch: 3,
            frame_spacing_ms: 500,
            cycle_period_ms: 5000,
            spacing_tolerance_ms: 20,
            cycle_tolerance_ms: 50,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.frames_per_batch == 0 {
            return Err(ScheduleError::InvalidConfig(
                "frames_per_batch must be at least 1".into(),
            ));
        }
        if self.cycle_period_ms == 0 {
            return Err(ScheduleError::InvalidConfig("cycle_period_ms must be positive".into()));
        }
        let span = (self.frames_per_batch as u64 - 1) * self.frame_spacing_ms;
        if span >= self.cycle_period_ms {
            return Err(ScheduleError::InvalidConfig(format!(
                "batch span {span} ms does not fit in a {} ms cycle",
                self.cycle_period_ms
            )));
        }
        Ok(())
    }
}

/// Downstream signal asking the scheduler to skip the next cycle.
#[derive(Debug, Clone, Default)]
pub struct BackPressure(Arc<AtomicBool>);

impl BackPressure {
    pub fn raise(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    fn take(&self) -> bool {
        self.0.swap(false, Ordering::SeqCst)
    }
}

#[derive(Debug)]
pub struct FrameScheduler {
    cfg: SchedulerConfig,
    next_start_ms: Option<u64>,
    emitted: u64,
    dropped: u64,
    last_now_ms: Option<u64>,
    last_frame_ts: Option<u64>,
    pressure: BackPressure,
}

impl FrameScheduler {
    pub fn new(cfg: SchedulerConfig) -> Result<Self, ScheduleError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            next_start_ms: None,
            emitted: 0,
            dropped: 0,
            last_now_ms: None,
            last_frame_ts: None,
            pressure: BackPressure::default(),
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn back_pressure(&self) -> BackPressure {
        self.pressure.clone()
    }

    pub fn dropped_cycles(&self) -> u64 {
        self.dropped
    }

    pub fn emitted_cycles(&self) -> u64 {
        self.emitted
    }

    fn observe(&mut self, clock: &dyn Clock) -> Result<u64, ScheduleError> {
        let now = clock.now_ms();
        if let Some(prev) = self.last_now_ms {
            if now < prev {
                return Err(ScheduleError::ClockRegression {
                    previous_ms: prev,
                    now_ms: now,
                });
            }
        }
        self.last_now_ms = Some(now);
        Ok(now)
    }

    /// Waits for the next cycle boundary and samples one batch.
    ///
    /// Cycles are skipped (and counted in [`dropped_cycles`](Self::dropped_cycles))
    /// when back-pressure is raised, when the boundary was already missed by
    /// more than the cycle tolerance, or when a frame sample lands outside the
    /// spacing tolerance.
    pub fn next_batch(&mut self, source: &mut dyn FrameSource, clock: &dyn Clock) -> Result<FrameBatch, ScheduleError> {
        let (spacing_tol, cycle_tol) = if clock.is_simulated() {
            (0, 0)
        } else {
            (self.cfg.spacing_tolerance_ms, self.cfg.cycle_tolerance_ms)
        };
        let period = self.cfg.cycle_period_ms;

        loop {
            let now = self.observe(clock)?;
            let start = *self.next_start_ms.get_or_insert(now);

            if self.pressure.take() {
                self.dropped += 1;
                self.next_start_ms = Some(start + period);
                continue;
            }
            if now > start + cycle_tol {
                let missed = (now - start - cycle_tol).div_ceil(period);
                self.dropped += missed;
                self.next_start_ms = Some(start + missed * period);
                continue;
            }

            let mut frames = Vec::with_capacity(self.cfg.frames_per_batch);
            let mut on_time = true;
            for i in 0..self.cfg.frames_per_batch as u64 {
                let target = start + i * self.cfg.frame_spacing_ms;
                if !clock.sleep_until(target) {
                    return Err(ScheduleError::Interrupted);
                }
                let now = self.observe(clock)?;
                if now > target + spacing_tol {
                    on_time = false;
                    break;
                }
                let frame = source.grab(now)?;
                if let Some(prev) = self.last_frame_ts {
                    if frame.timestamp_ms < prev {
                        return Err(ScheduleError::ClockRegression {
                            previous_ms: prev,
                            now_ms: frame.timestamp_ms,
                        });
                    }
                }
                self.last_frame_ts = Some(frame.timestamp_ms);
                frames.push(frame);
            }
            self.next_start_ms = Some(start + period);
            if !on_time {
                self.dropped += 1;
                continue;
            }

            let batch = FrameBatch {
                cycle_index: self.emitted,
                cycle_start_ms: start,
                frames,
            };
            self.emitted += 1;
            return Ok(batch);
        }
    }

    /// Producer loop feeding a capacity-1 hand-off. A batch displaced before
    /// the consumer took it counts as a dropped cycle. Returns the error that
    /// ended the loop (normally `SourceExhausted` or `Interrupted`).
    pub fn produce_into(
        &mut self,
        source: &mut dyn FrameSource,
        clock: &dyn Clock,
        out: &Handoff<FrameBatch>,
        stop: &Shutdown,
    ) -> ScheduleError {
        loop {
            if stop.is_triggered() {
                out.close();
                return ScheduleError::Interrupted;
            }
            match self.next_batch(source, clock) {
                Ok(batch) => {
                    if out.put(batch).is_some() {
                        self.dropped += 1;
                    }
                }
                Err(e) => {
                    out.close();
                    return e;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> FrameScheduler {
        FrameScheduler::new(SchedulerConfig::default()).unwrap()
    }

    #[test]
    fn first_two_batches_on_simulated_clock() {
        let clock = SimulatedClock::new(0);
        let mut src = SyntheticSource::new(1000, 2.0, 640, 480).unwrap();
        let mut s = sched();
        let b0 = s.next_batch(&mut src, &clock).unwrap();
        let ts: Vec<u64> = b0.frames.iter().map(|f| f.timestamp_ms).collect();
        assert_eq!(ts, vec![0, 500, 1000]);
        assert_eq!(b0.cycle_index, 0);
        let b1 = s.next_batch(&mut src, &clock).unwrap();
        assert_eq!(b1.cycle_start_ms, 5000);
        assert_eq!(b1.cycle_index, 1);
    }

    #[test]
    fn three_frame_source_yields_one_batch_then_exhausts() {
        let clock = SimulatedClock::new(0);
        let mut src = SyntheticSource::new(3, 2.0, 640, 480).unwrap();
        let mut s = sched();
        assert_eq!(s.next_batch(&mut src, &clock).unwrap().frames.len(), 3);
        assert_eq!(s.next_batch(&mut src, &clock), Err(ScheduleError::SourceExhausted));
    }

    #[test]
    fn ten_cycles_do_not_drift() {
        // Oracle: the k-th cycle starts at origin + k * period.
        let origin = 1234;
        let clock = SimulatedClock::new(origin);
        let mut src = SyntheticSource::new(10_000, 2.0, 640, 480).unwrap();
        let mut s = sched();
        for k in 0..10u64 {
            let b = s.next_batch(&mut src, &clock).unwrap();
            assert_eq!(b.cycle_start_ms, origin + 5000 * k);
            assert_eq!(b.cycle_index, k);
            for (i, f) in b.frames.iter().enumerate() {
                assert_eq!(f.timestamp_ms, origin + 5000 * k + 500 * i as u64);
            }
        }
        assert_eq!(s.dropped_cycles(), 0);
    }

    #[test]
    fn frame_ids_follow_the_source_rate() {
        let clock = SimulatedClock::new(0);
        let mut src = SyntheticSource::new(100, 2.0, 640, 480).unwrap();
        let mut s = sched();
        let ids: Vec<u64> = s
            .next_batch(&mut src, &clock)
            .unwrap()
            .frames
            .iter()
            .map(|f| f.frame_id)
            .collect();
        assert_eq!(ids, vec![0, 1, 2]);
        let ids: Vec<u64> = s
            .next_batch(&mut src, &clock)
            .unwrap()
            .frames
            .iter()
            .map(|f| f.frame_id)
            .collect();
        assert_eq!(ids, vec![10, 11, 12]);
    }

    #[test]
    fn back_pressure_skips_and_counts() {
        let clock = SimulatedClock::new(0);
        let mut src = SyntheticSource::new(1000, 2.0, 640, 480).unwrap();
        let mut s = sched();
        s.next_batch(&mut src, &clock).unwrap();
        s.back_pressure().raise();
        let b = s.next_batch(&mut src, &clock).unwrap();
        assert_eq!(b.cycle_start_ms, 10_000);
        assert_eq!(b.cycle_index, 1);
        assert_eq!(s.dropped_cycles(), 1);
    }

    #[test]
    fn overrun_past_boundary_drops_missed_cycles() {
        let clock = SimulatedClock::new(0);
        let mut src = SyntheticSource::new(1000, 2.0, 640, 480).unwrap();
        let mut s = sched();
        s.next_batch(&mut src, &clock).unwrap();
        // downstream work ran until 12.3 s; slots at 5 s and 10 s are gone
        clock.set(12_300);
        let b = s.next_batch(&mut src, &clock).unwrap();
        assert_eq!(b.cycle_start_ms, 15_000);
        assert_eq!(s.dropped_cycles(), 2);
    }

    #[test]
    fn regressing_clock_is_reported() {
        let clock = SimulatedClock::new(10_000);
        let mut src = SyntheticSource::new(1000, 2.0, 640, 480).unwrap();
        let mut s = sched();
        s.next_batch(&mut src, &clock).unwrap();
        clock.set(100);
        assert!(matches!(
            s.next_batch(&mut src, &clock),
            Err(ScheduleError::ClockRegression { .. })
        ));
    }

    #[test]
    fn rejects_batches_that_overflow_the_cycle() {
        let cfg = SchedulerConfig {
            frames_per_batch: 11,
            ..SchedulerConfig::default()
        };
        assert!(FrameScheduler::new(cfg).is_err());
    }

    #[test]
    fn wall_clock_batch_within_tolerance() {
        let cfg = SchedulerConfig {
            frame_spacing_ms: 30,
            cycle_period_ms: 200,
            ..SchedulerConfig::default()
        };
        let clock = WallClock::new();
        let mut src = SyntheticSource::new(10_000, 1000.0, 64, 48).unwrap();
        let mut s = FrameScheduler::new(cfg.clone()).unwrap();
        let a = s.next_batch(&mut src, &clock).unwrap();
        let b = s.next_batch(&mut src, &clock).unwrap();
        for batch in [&a, &b] {
            for w in batch.frames.windows(2) {
                let gap = w[1].timestamp_ms - w[0].timestamp_ms;
                assert!(gap.abs_diff(30) <= cfg.spacing_tolerance_ms, "gap {gap}");
            }
        }
        let period = b.cycle_start_ms - a.cycle_start_ms;
        assert!(period.abs_diff(200) <= cfg.cycle_tolerance_ms || s.dropped_cycles() > 0);
    }

    #[test]
    fn shutdown_interrupts_wall_clock_sleep() {
        let stop = Shutdown::new();
        let clock = WallClock::with_shutdown(stop.clone());
        let mut src = SyntheticSource::new(10_000, 2.0, 64, 48).unwrap();
        let mut s = sched();
        s.next_batch(&mut src, &clock).unwrap();
        stop.trigger();
        assert_eq!(s.next_batch(&mut src, &clock), Err(ScheduleError::Interrupted));
    }

    #[test]
    fn producer_feeds_handoff_until_exhausted() {
        let clock = SimulatedClock::new(0);
        let mut src = SyntheticSource::new(25, 2.0, 64, 48).unwrap();
        let mut s = sched();
        let out = Handoff::new();
        let end = s.produce_into(&mut src, &clock, &out, &Shutdown::new());
        assert_eq!(end, ScheduleError::SourceExhausted);
        // nobody consumed: three batches emitted, two displaced
        assert_eq!(s.emitted_cycles(), 3);
        assert_eq!(s.dropped_cycles(), 2);
        assert_eq!(out.try_take().unwrap().cycle_index, 2);
    }

    #[test]
    fn directory_source_orders_by_number() {
        let dir = tempfile::tempdir().unwrap();
        for n in [10, 2, 1] {
            let img = image::RgbImage::new(8, 6);
            img.save(dir.path().join(format!("frame_{n}.png"))).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let mut src = DirectorySource::open(dir.path(), 2.0).unwrap();
        assert_eq!(src.len(), 3);
        let f0 = src.grab(0).unwrap();
        assert_eq!((f0.frame_id, f0.width_px, f0.height_px), (1, 8, 6));
        assert_eq!(src.grab(500).unwrap().frame_id, 2);
        assert_eq!(src.grab(1000).unwrap().frame_id, 10);
        assert_eq!(src.grab(1500), Err(ScheduleError::SourceExhausted));
    }
}
