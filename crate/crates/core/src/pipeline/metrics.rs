use std::io::Write;

use serde::{Deserialize, Serialize};

/// One record per cycle. Durations are wall milliseconds with sub-ms precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleMetrics {
    pub cycle_index: u64,
    /// Time spent inside the scheduler producing the batch, cadence waits included.
    pub acquire_ms: f64,
    pub detect_ms: f64,
    pub range_ms: f64,
    pub describe_ms: f64,
    pub tts_dispatch_ms: f64,
    pub end_to_end_ms: f64,
    pub dropped: bool,
}

impl CycleMetrics {
    pub fn dropped(cycle_index: u64) -> Self {
        Self {
            cycle_index,
            acquire_ms: 0.0,
            detect_ms: 0.0,
            range_ms: 0.0,
            describe_ms: 0.0,
            tts_dispatch_ms: 0.0,
            end_to_end_ms: 0.0,
            dropped: true,
        }
    }

    /// The pipeline's own compute: everything except detector and speech waits.
    pub fn overhead_ms(&self) -> f64 {
        (self.end_to_end_ms - self.detect_ms - self.tts_dispatch_ms).max(0.0)
    }
}

/// Writes metrics as JSON lines.
pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, m: &CycleMetrics) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, m)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Nearest-rank percentile, `p` in `[0, 100]`. Returns 0 for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
