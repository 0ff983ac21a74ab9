//! Assistive navigation core: frame scheduling, detection plumbing,
//! monocular ranging, scene description, speech dispatch, plus the
//! weight-quantization and fine-tuning math used to size and adapt the
//! detector.

pub mod api;
pub mod describer;
pub mod distance;
pub mod finetune;
pub mod handoff;
pub mod perception;
pub mod pipeline;
pub mod quantization;
pub mod scheduler;
pub mod tts;
