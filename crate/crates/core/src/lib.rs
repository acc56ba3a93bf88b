//! Real-time caption fusion: merges a streaming transcript with tone and
//! gesture cues into annotated caption segments, and fans them out to
//! subscribed viewers.
//!
//! The prosody heuristic is generic over the float type; the aliases below
//! fix it to `f64`, which is what the wire format carries.

pub mod cue_model;
pub mod delivery;
pub mod fusion;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod preferences;
pub mod synth;
pub mod transcript;

pub use cue_model::{
    Annotation, CaptionSegment, CueEvent, CueKind, CueLabel, GestureLabel, SegmentId, SegmentState, Stability,
    Timestamp, ToneLabel, TranscriptToken, Verbosity,
};
pub use fusion::{Emission, EmissionKind, FusionConfig, FusionEngine, FusionError};
pub use ingest::{IngestError, IngestEvent, Payload, Source};
pub use metrics::{Metrics, MetricsReport};
pub use pipeline::{replay_session, replay_str, Intake, Pipeline, Recorder, ReplayOutcome};
pub use preferences::{PreferenceProfile, ProfilePatch, ProfileStore};

pub type ProsodyFrame = ingest::prosody::ProsodyFrame<f64>;
pub type ToneDetector = ingest::prosody::ToneDetector<f64>;
pub type RunningStats = ingest::prosody::RunningStats<f64>;
pub type FeatureStats = ingest::prosody::FeatureStats<f64>;
pub type ZScores = ingest::prosody::ZScores<f64>;
pub type ToneThresholds = ingest::prosody::ToneThresholds<f64>;
