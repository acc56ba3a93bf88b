//! Single-writer fusion state machine.
//!
//! Tokens and cues are buffered as they arrive. Nothing is emitted until the
//! fusion watermark (minimum over the three source watermarks) passes them:
//! a token becomes eligible once its `t_end` is behind the watermark, and a
//! closed segment is finalized once the watermark reaches
//! `t_end + grace_ms`. At that point every cue that could overlap it has
//! arrived, so the output does not depend on delivery interleaving.

use std::collections::VecDeque;

use thiserror::Error;

use crate::cue_model::{CaptionSegment, SegmentId, SegmentState, Stability, Timestamp, TranscriptToken};
use crate::ingest::codec::{IngestEvent, Payload, Source};

use super::attach::{attach_cues, Hysteresis, PendingCues};
use super::config::FusionConfig;
use super::segmenter::{closes_after, gap_ms, segment_tokens, SegmentDecision};

/// Per-source bound on buffered events.
pub const MAX_BUFFERED: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmissionKind {
    SegmentOpen,
    SegmentRevised,
    SegmentFinal,
}

impl EmissionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmissionKind::SegmentOpen => "segment_open",
            EmissionKind::SegmentRevised => "segment_revised",
            EmissionKind::SegmentFinal => "segment_final",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub kind: EmissionKind,
    pub segment: CaptionSegment,
    /// Session time at which the emission was produced; stamped by the
    /// driver, zero when unknown.
    pub emitted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FusionError {
    #[error("{stream} buffer exceeded {MAX_BUFFERED} events; dropped oldest seq {dropped_seq}")]
    BufferOverflow { stream: Source, dropped_seq: u64 },
    #[error("fusion does not take {0} events")]
    UnsupportedSource(Source),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FusionStats {
    pub cues_accepted: u64,
    pub cues_attached: u64,
    pub cues_dropped: u64,
    pub cues_pending: u64,
    pub tokens_replaced: u64,
    pub tokens_overflowed: u64,
    pub segments_final: u64,
}

#[derive(Debug, Clone)]
struct WorkingSegment {
    segment: CaptionSegment,
    /// Content changed since the last open/revised emission.
    dirty: bool,
    /// At least one open/revised emission went out.
    announced: bool,
}

impl WorkingSegment {
    fn new(segment: CaptionSegment) -> Self {
        WorkingSegment {
            segment,
            dirty: true,
            announced: false,
        }
    }

    fn announce(&mut self) -> Option<Emission> {
        if !self.dirty {
            return None;
        }
        self.dirty = false;
        let kind = if self.announced {
            self.segment.revision += 1;
            EmissionKind::SegmentRevised
        } else {
            self.announced = true;
            EmissionKind::SegmentOpen
        };
        Some(Emission {
            kind,
            segment: self.segment.clone(),
            emitted_at: Timestamp::ZERO,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FusionEngine {
    config: FusionConfig,
    watermarks: [Timestamp; 3],
    tokens: VecDeque<TranscriptToken>,
    pending: PendingCues,
    open: Option<WorkingSegment>,
    closing: VecDeque<WorkingSegment>,
    hysteresis: Hysteresis,
    segment_counter: u64,
    stats: FusionStats,
}

impl FusionEngine {
    pub fn new(config: FusionConfig) -> Self {
        FusionEngine {
            config,
            watermarks: [Timestamp::ZERO; 3],
            tokens: VecDeque::new(),
            pending: PendingCues::default(),
            open: None,
            closing: VecDeque::new(),
            hysteresis: Hysteresis::default(),
            segment_counter: 0,
            stats: FusionStats::default(),
        }
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn fusion_watermark(&self) -> Timestamp {
        self.watermarks.into_iter().min().unwrap_or_default()
    }

    pub fn source_watermarks(&self) -> [Timestamp; 3] {
        self.watermarks
    }

    pub fn stats(&self) -> FusionStats {
        FusionStats {
            cues_pending: self.pending.len() as u64,
            ..self.stats
        }
    }

    pub fn buffered_tokens(&self) -> impl Iterator<Item = &TranscriptToken> {
        self.tokens.iter()
    }

    pub fn pending_cues(&self) -> &PendingCues {
        &self.pending
    }

    pub fn open_segment(&self) -> Option<&CaptionSegment> {
        self.open.as_ref().map(|w| &w.segment)
    }

    /// Buffers a token or cue, or records a watermark beat. Never emits.
    ///
    /// On `BufferOverflow` the new event is kept and the oldest buffered event
    /// of that source is gone.
    pub fn ingest_event(&mut self, event: IngestEvent) -> Result<(), FusionError> {
        let source = event.source;
        match event.payload {
            Payload::Watermark(beat) => {
                let i = source.fused_index().ok_or(FusionError::UnsupportedSource(source))?;
                self.watermarks[i] = self.watermarks[i].max(beat.t);
                Ok(())
            }
            Payload::Token(token) => {
                let before = self.tokens.len();
                self.tokens.retain(|b| b.stability != Stability::Partial || !b.overlaps(&token));
                self.stats.tokens_replaced += (before - self.tokens.len()) as u64;
                self.tokens.push_back(token);
                if self.tokens.len() > MAX_BUFFERED {
                    let dropped = self.tokens.pop_front().expect("buffer is non-empty");
                    self.stats.tokens_overflowed += 1;
                    return Err(FusionError::BufferOverflow {
                        stream: source,
                        dropped_seq: dropped.source_seq,
                    });
                }
                Ok(())
            }
            Payload::Cue(cue) => {
                self.stats.cues_accepted += 1;
                self.pending.push(cue);
                let list = match source {
                    Source::Affect => &mut self.pending.tones,
                    _ => &mut self.pending.gestures,
                };
                if list.len() > MAX_BUFFERED {
                    let dropped = list.remove(0);
                    self.stats.cues_dropped += 1;
                    return Err(FusionError::BufferOverflow {
                        stream: source,
                        dropped_seq: dropped.source_seq,
                    });
                }
                Ok(())
            }
            Payload::Frame(_) => Err(FusionError::UnsupportedSource(source)),
        }
    }

    /// Moves eligible tokens into segments and finalizes what the watermark
    /// allows.
    pub fn advance_watermark(&mut self) -> Vec<Emission> {
        let fw = self.fusion_watermark();
        let mut out = Vec::new();
        while self.tokens.front().is_some_and(|t| t.t_end <= fw) {
            let token = self.tokens.pop_front().expect("front checked");
            self.place_token(token);
        }
        self.close_if_settled(fw);
        while self
            .closing
            .front()
            .is_some_and(|w| fw >= w.segment.t_end.saturating_add(self.config.grace_ms))
        {
            let done = self.closing.pop_front().expect("front checked");
            out.push(self.finalize(done));
        }
        self.expire_unreachable_cues(fw);
        self.announce_changes(&mut out);
        out
    }

    /// End of session: everything buffered is segmented and finalized, and
    /// remaining cues are dropped.
    pub fn finish(&mut self) -> Vec<Emission> {
        while let Some(token) = self.tokens.pop_front() {
            self.place_token(token);
        }
        if let Some(open) = self.open.take() {
            self.closing.push_back(open);
        }
        let mut out = Vec::with_capacity(self.closing.len());
        while let Some(done) = self.closing.pop_front() {
            out.push(self.finalize(done));
        }
        self.stats.cues_dropped += self.pending.clear() as u64;
        out
    }

    fn next_segment_id(&mut self) -> SegmentId {
        self.segment_counter += 1;
        SegmentId::from_counter(self.segment_counter)
    }

    fn place_token(&mut self, token: TranscriptToken) {
        let Some(open) = self.open.as_mut() else {
            let id = self.next_segment_id();
            self.open = Some(WorkingSegment::new(CaptionSegment::new(id, token)));
            return;
        };
        if apply_revision(&mut open.segment, &token) {
            open.dirty = true;
            self.stats.tokens_replaced += 1;
            return;
        }
        match segment_tokens(&open.segment.tokens, &token, &self.config) {
            SegmentDecision::Append => {
                open.segment.push_token(token);
                open.dirty = true;
            }
            SegmentDecision::CloseThenOpen => {
                let closed = self.open.take().expect("open checked");
                self.closing.push_back(closed);
                let id = self.next_segment_id();
                self.open = Some(WorkingSegment::new(CaptionSegment::new(id, token)));
            }
        }
    }

    /// Closes the open segment early when its fate no longer depends on
    /// future tokens: a sentence-final last token, or a pause that every
    /// later token must respect.
    fn close_if_settled(&mut self, fw: Timestamp) {
        let Some(open) = self.open.as_ref() else { return };
        let last = open.segment.tokens.last().expect("segments are never empty");
        let settled = closes_after(last)
            || match self.tokens.front() {
                Some(next) => gap_ms(last, next) >= self.config.gap_ms as i64,
                None => fw.0 >= last.t_end.0 + self.config.gap_ms,
            };
        if settled {
            let closed = self.open.take().expect("open checked");
            self.closing.push_back(closed);
        }
    }

    fn finalize(&mut self, working: WorkingSegment) -> Emission {
        let mut segment = working.segment;
        for token in &mut segment.tokens {
            token.stability = Stability::Final;
        }
        let report = attach_cues(&segment, &mut self.pending, &mut self.hysteresis, &self.config);
        self.stats.cues_attached += report.attached as u64;
        self.stats.cues_dropped += report.suppressed as u64;
        segment.annotations = report.annotations;
        segment.state = SegmentState::Final;
        segment.revision = if working.announced { segment.revision + 1 } else { 0 };
        self.stats.cues_dropped += self.pending.expire_before(segment.t_start) as u64;
        self.stats.segments_final += 1;
        Emission {
            kind: EmissionKind::SegmentFinal,
            segment,
            emitted_at: Timestamp::ZERO,
        }
    }

    /// Drops cues that end before any segment still to be finalized can
    /// start.
    fn expire_unreachable_cues(&mut self, fw: Timestamp) {
        let bound = self
            .closing
            .front()
            .or(self.open.as_ref())
            .map(|w| w.segment.t_start)
            .into_iter()
            .chain(self.tokens.front().map(|t| t.t_start))
            .chain(Some(fw))
            .min()
            .expect("fw is always present");
        self.stats.cues_dropped += self.pending.expire_before(bound) as u64;
    }

    fn announce_changes(&mut self, out: &mut Vec<Emission>) {
        for w in self.closing.iter_mut().chain(self.open.as_mut()) {
            out.extend(w.announce());
        }
    }
}

/// Replaces trailing partial tokens of an open segment that `token`
/// overlaps. Returns false, leaving the segment alone, when nothing
/// overlaps.
pub fn apply_revision(segment: &mut CaptionSegment, token: &TranscriptToken) -> bool {
    let keep = segment
        .tokens
        .iter()
        .rposition(|t| t.is_final() || !t.overlaps(token))
        .map_or(0, |i| i + 1);
    if keep == segment.tokens.len() {
        return false;
    }
    segment.tokens.truncate(keep);
    segment.tokens.push(token.clone());
    segment.recompute_span();
    true
}
