//! Event-time merge of the transcript and cue streams into annotated caption
//! segments.

pub mod attach;
pub mod config;
pub mod engine;
pub mod segmenter;

pub use attach::{attach_cues, tone_qualifies, AttachReport, Hysteresis, PendingCues};
pub use config::{ConfigError, FusionConfig};
pub use engine::{apply_revision, Emission, EmissionKind, FusionEngine, FusionError, FusionStats, MAX_BUFFERED};
pub use segmenter::{segment_tokens, SegmentDecision};
