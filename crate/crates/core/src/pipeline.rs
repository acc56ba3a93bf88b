//! The single-writer path from raw ingest lines to emissions: decode, order
//! gate, prosody detection, fusion, metrics.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use crate::cue_model::{CaptionSegment, Timestamp};
use crate::fusion::{Emission, EmissionKind, FusionConfig, FusionEngine, FusionError};
use crate::ingest::codec::{decode_event, encode_event, peek_source, IngestError, IngestEvent, Payload, Source};
use crate::ingest::liveness::LivenessPolicy;
use crate::ingest::order::{check_stream_order, OrderVerdict, RejectReason, SourceState};
use crate::ingest::replay::{terminal_watermarks, Clock, Replay, ReplayError, ReplayItem};
use crate::metrics::{Metrics, MetricsReport};
use crate::transcript::render_transcript;
use crate::ToneDetector;

/// What happened to one offered event.
#[derive(Debug, Clone, PartialEq)]
pub enum Intake {
    Accepted,
    Rejected(RejectReason),
    Undecodable(IngestError),
}

impl Intake {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Intake::Accepted)
    }
}

pub struct Pipeline {
    engine: FusionEngine,
    order: [SourceState; 4],
    detector: ToneDetector,
    liveness: Option<LivenessPolicy>,
    metrics: Arc<Metrics>,
    finals: Vec<CaptionSegment>,
    finished: bool,
}

impl Pipeline {
    pub fn new(config: FusionConfig, metrics: Arc<Metrics>) -> Self {
        Pipeline {
            engine: FusionEngine::new(config),
            order: [SourceState::default(); 4],
            detector: ToneDetector::default(),
            liveness: None,
            metrics,
            finals: Vec::new(),
            finished: false,
        }
    }

    /// Enables the stall policy; used for live sources only.
    pub fn with_liveness(mut self, policy: LivenessPolicy) -> Self {
        self.liveness = Some(policy);
        self
    }

    pub fn engine(&self) -> &FusionEngine {
        &self.engine
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    pub fn finals(&self) -> &[CaptionSegment] {
        &self.finals
    }

    pub fn transcript(&self) -> String {
        render_transcript(&self.finals)
    }

    /// Decodes and offers one NDJSON line.
    pub fn offer_line(&mut self, line: &[u8], now: Timestamp) -> (Intake, Vec<Emission>) {
        match decode_event(line) {
            Ok(event) => self.offer(event, now),
            Err(error) => {
                let source = peek_source(line);
                self.metrics.event_in(source);
                self.metrics.rejected(source, error.reason());
                tracing::debug!(%error, "dropped undecodable line");
                (Intake::Undecodable(error), Vec::new())
            }
        }
    }

    /// Offers one decoded event from an external source. `now` is the
    /// current session time, used for latency and stall detection.
    pub fn offer(&mut self, event: IngestEvent, now: Timestamp) -> (Intake, Vec<Emission>) {
        let source = event.source;
        self.metrics.event_in(Some(source));
        if let OrderVerdict::Reject(reason) = check_stream_order(&mut self.order[source.index()], &event) {
            self.metrics.rejected_order(source, reason);
            tracing::debug!(%source, %reason, "rejected out-of-order event");
            return (Intake::Rejected(reason), Vec::new());
        }
        self.metrics.accepted(source);
        if let (Some(policy), Payload::Watermark(_)) = (self.liveness.as_mut(), &event.payload) {
            policy.observe_beat(source, now);
        }
        self.feed(event);
        self.stall_check(now);
        (Intake::Accepted, self.advance(now))
    }

    /// Feeds an already-trusted event (terminal watermarks) straight to
    /// fusion, bypassing the order gate and event counters.
    pub fn inject(&mut self, event: IngestEvent, now: Timestamp) -> Vec<Emission> {
        self.feed(event);
        self.advance(now)
    }

    /// Periodic hook for live sessions: applies the stall policy.
    pub fn tick(&mut self, now: Timestamp) -> Vec<Emission> {
        self.stall_check(now);
        self.advance(now)
    }

    /// Flushes everything at end of session.
    pub fn finish(&mut self, now: Timestamp) -> Vec<Emission> {
        if self.finished {
            return Vec::new();
        }
        self.finished = true;
        let out = self.engine.finish();
        self.account(out, now)
    }

    fn feed(&mut self, event: IngestEvent) {
        let result = match event.payload {
            Payload::Frame(frame) => {
                let cue = self.detector.push(frame);
                let cue_result = match cue {
                    Some(cue) => self.engine.ingest_event(IngestEvent::cue(cue)),
                    None => Ok(()),
                };
                let wm = self.detector.watermark();
                self.engine
                    .ingest_event(IngestEvent::watermark(Source::Affect, wm))
                    .and(cue_result)
            }
            _ => self.engine.ingest_event(event),
        };
        if let Err(err @ FusionError::BufferOverflow { .. }) = result {
            self.metrics.buffer_overflow();
            tracing::warn!(%err, "fusion buffer overflow");
        } else if let Err(err) = result {
            tracing::warn!(%err, "event not accepted by fusion");
        }
    }

    fn stall_check(&mut self, now: Timestamp) {
        let Some(policy) = &self.liveness else { return };
        for (source, t) in policy.stalled(now, self.engine.source_watermarks()) {
            tracing::info!(%source, watermark = %t, "source stalled; advancing its watermark");
            let state = &mut self.order[source.index()];
            state.watermark = state.watermark.max(t);
            self.feed(IngestEvent::watermark(source, t));
        }
    }

    fn advance(&mut self, now: Timestamp) -> Vec<Emission> {
        let out = self.engine.advance_watermark();
        self.account(out, now)
    }

    fn account(&mut self, mut out: Vec<Emission>, now: Timestamp) -> Vec<Emission> {
        for emission in &mut out {
            emission.emitted_at = now;
            if emission.kind == EmissionKind::SegmentFinal {
                let latency = now.0.saturating_sub(emission.segment.t_end.0);
                self.metrics.segment_finalized(latency);
                self.finals.push(emission.segment.clone());
            }
        }
        self.metrics.set_cue_stats(&self.engine.stats());
        out
    }
}

/// Result of a headless replay.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub finals: Vec<CaptionSegment>,
    pub transcript: String,
    pub report: MetricsReport,
}

/// Runs a session file through the full pipeline. `on_emission` sees every
/// emission in order.
pub fn replay_session<R: BufRead, C: Clock>(
    reader: R,
    speed: f64,
    clock: C,
    config: FusionConfig,
    mut on_emission: impl FnMut(&Emission),
) -> Result<ReplayOutcome, ReplayError> {
    let metrics = Arc::new(Metrics::new());
    let mut pipeline = Pipeline::new(config, metrics.clone());
    let mut replay = Replay::new(reader, speed, clock)?;
    while let Some(item) = replay.next() {
        let now = replay.session_now();
        let emitted = match item? {
            ReplayItem::Event { event, .. } => pipeline.offer(event, now).1,
            ReplayItem::Rejected { raw, .. } => pipeline.offer_line(raw.as_bytes(), now).1,
            ReplayItem::Terminal(event) => pipeline.inject(event, now),
        };
        emitted.iter().for_each(&mut on_emission);
    }
    let now = replay.session_now();
    pipeline.finish(now).iter().for_each(&mut on_emission);
    Ok(ReplayOutcome {
        transcript: pipeline.transcript(),
        finals: pipeline.finals,
        report: metrics.report(),
    })
}

/// Replays a session held in memory as fast as possible.
pub fn replay_str(session: &str, config: FusionConfig) -> Result<ReplayOutcome, ReplayError> {
    replay_session(session.as_bytes(), 0.0, crate::ingest::ManualClock::new(), config, |_| {})
}

/// Writes accepted ingest lines verbatim, then terminal watermarks on
/// close. A file without terminal lines was cut short.
pub struct Recorder<W: Write> {
    out: W,
    max_t: Timestamp,
}

impl<W: Write> Recorder<W> {
    pub fn new(out: W) -> Self {
        Recorder {
            out,
            max_t: Timestamp::ZERO,
        }
    }

    pub fn record(&mut self, raw: &str, event: &IngestEvent) -> io::Result<()> {
        self.max_t = self.max_t.max(event.end());
        self.out.write_all(raw.trim_end_matches(['\n', '\r']).as_bytes())?;
        self.out.write_all(b"\n")
    }

    /// Appends the terminal watermark lines and flushes.
    pub fn close(mut self) -> io::Result<W> {
        for ev in terminal_watermarks(Timestamp(self.max_t.0 + 1)) {
            writeln!(self.out, "{}", encode_event(&ev))?;
        }
        self.out.flush()?;
        Ok(self.out)
    }
}
