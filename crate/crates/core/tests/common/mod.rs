#![allow(dead_code)]

pub mod closure;
pub mod oracle;
pub mod strategies;

use capfuse_core::cue_model::CaptionSegment;
use capfuse_core::fusion::{EmissionKind, FusionConfig, FusionEngine};
use capfuse_core::ingest::replay::terminal_watermarks;
use capfuse_core::ingest::{IngestEvent, Payload};
use capfuse_core::synth::{interleave, random_script, Script, ScriptShape};
use capfuse_core::transcript::transcript_line;
use capfuse_core::Timestamp;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Feeds `events` to a fresh engine, advancing after every event, then
/// terminal watermarks and `finish`. Returns the finals in emission order.
pub fn stream_finals(events: &[IngestEvent], cfg: &FusionConfig) -> Vec<CaptionSegment> {
    let mut engine = FusionEngine::new(cfg.clone());
    let mut finals = Vec::new();
    let max_t = events.iter().map(|e| e.end()).max().unwrap_or_default();
    let tail = terminal_watermarks(Timestamp(max_t.0 + 1));
    for ev in events.iter().chain(&tail) {
        engine.ingest_event(ev.clone()).expect("within buffer bounds");
        for e in engine.advance_watermark() {
            if e.kind == EmissionKind::SegmentFinal {
                finals.push(e.segment);
            }
        }
    }
    finals.extend(engine.finish().into_iter().map(|e| e.segment));
    finals
}

pub fn lines(segments: &[CaptionSegment]) -> Vec<String> {
    segments.iter().map(transcript_line).collect()
}

/// A random session the way the acceptance criteria describe it: three
/// sources with 50 to 500 events each, in a random arrival order.
pub fn random_session(seed: u64) -> (Script, Vec<IngestEvent>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let shape = ScriptShape::random(&mut rng, 50, 500);
    let script = random_script(&mut rng, shape);
    let events = interleave(&script, &mut rng);
    (script, events)
}

/// Same content, different arrival order.
pub fn reinterleave(script: &Script, seed: u64) -> Vec<IngestEvent> {
    interleave(script, &mut StdRng::seed_from_u64(seed))
}

pub fn is_watermark(ev: &IngestEvent) -> bool {
    matches!(ev.payload, Payload::Watermark(_))
}

/// Every emission the engine produces for `events`, terminal beats and
/// `finish` included.
pub fn all_emissions(events: &[IngestEvent], cfg: &FusionConfig) -> Vec<capfuse_core::Emission> {
    let mut engine = FusionEngine::new(cfg.clone());
    let max_t = events.iter().map(|e| e.end()).max().unwrap_or_default();
    let tail = terminal_watermarks(Timestamp(max_t.0 + 1));
    let mut out = Vec::new();
    for ev in events.iter().chain(&tail) {
        engine.ingest_event(ev.clone()).expect("within buffer bounds");
        out.extend(engine.advance_watermark());
    }
    out.extend(engine.finish());
    out
}
