//! Contract for bridging a third-party streaming recognizer into the token
//! stream. No concrete service client lives here.
//!
//! Interim hypotheses become `partial` tokens, final hypotheses become
//! `final` tokens. Later tokens overlapping an earlier partial replace it
//! downstream. A watermark follows every final hypothesis, and keepalives
//! during silence advance the watermark in 500 ms steps.

use thiserror::Error;

use crate::cue_model::{Stability, Timestamp, TranscriptToken};

use super::codec::{IngestEvent, Source};

pub const KEEPALIVE_STEP_MS: u64 = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct WordTiming {
    pub text: String,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub confidence: f64,
}

/// What a recognizer session reports.
#[derive(Debug, Clone, PartialEq)]
pub enum RecognizerUpdate {
    Interim(Vec<WordTiming>),
    Final(Vec<WordTiming>),
    /// The service is alive and has heard nothing new up to `at`.
    Keepalive { at: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("speech service unavailable: {0}")]
    ServiceUnavailable(String),
}

/// A live connection to an external streaming recognizer.
pub trait StreamingRecognizer {
    /// Next update, `Ok(None)` at end of stream.
    fn next_update(&mut self) -> Result<Option<RecognizerUpdate>, AdapterError>;
}

/// Maps recognizer updates to ingest events for the `asr` source.
#[derive(Debug, Clone)]
pub struct AsrAdapter {
    speaker_id: String,
    next_seq: u64,
    watermark: Timestamp,
    /// Start of the oldest interim word not yet covered by a final.
    pending_interim: Option<Timestamp>,
}

impl AsrAdapter {
    pub fn new(speaker_id: impl Into<String>) -> Self {
        AsrAdapter {
            speaker_id: speaker_id.into(),
            next_seq: 1,
            watermark: Timestamp::ZERO,
            pending_interim: None,
        }
    }

    pub fn watermark(&self) -> Timestamp {
        self.watermark
    }

    fn tokens(&mut self, words: Vec<WordTiming>, stability: Stability) -> Vec<IngestEvent> {
        words
            .into_iter()
            .filter(|w| !w.text.trim().is_empty())
            .map(|w| {
                let seq = self.next_seq;
                self.next_seq += 1;
                IngestEvent::token(TranscriptToken {
                    source_seq: seq,
                    text: w.text.trim().to_string(),
                    t_start: w.t_start,
                    t_end: w.t_end.max(w.t_start),
                    speaker_id: self.speaker_id.clone(),
                    stability,
                    confidence: w.confidence.clamp(0.0, 1.0),
                })
            })
            .collect()
    }

    fn beat(&mut self, t: Timestamp) -> Option<IngestEvent> {
        let bound = self.pending_interim.map_or(t, |p| p.min(t));
        (bound > self.watermark).then(|| {
            self.watermark = bound;
            IngestEvent::watermark(Source::Asr, bound)
        })
    }

    pub fn on_update(&mut self, update: RecognizerUpdate) -> Vec<IngestEvent> {
        match update {
            RecognizerUpdate::Interim(words) => {
                if let Some(first) = words.iter().map(|w| w.t_start).min() {
                    let p = self.pending_interim.map_or(first, |p| p.min(first));
                    self.pending_interim = Some(p);
                }
                self.tokens(words, Stability::Partial)
            }
            RecognizerUpdate::Final(words) => {
                let end = words.iter().map(|w| w.t_end).max();
                let mut out = self.tokens(words, Stability::Final);
                if let Some(end) = end {
                    if self.pending_interim.is_some_and(|p| p < end) {
                        self.pending_interim = None;
                    }
                    out.extend(self.beat(end));
                }
                out
            }
            RecognizerUpdate::Keepalive { at } => {
                let mut out = Vec::new();
                while self.watermark.0 + KEEPALIVE_STEP_MS <= at.0 {
                    match self.beat(self.watermark.saturating_add(KEEPALIVE_STEP_MS)) {
                        Some(ev) => out.push(ev),
                        None => break,
                    }
                }
                out
            }
        }
    }

    /// Drains a recognizer into `sink`. A service failure ends this source
    /// only; the caller reports it as a disconnect.
    pub fn pump<R: StreamingRecognizer>(
        &mut self,
        recognizer: &mut R,
        mut sink: impl FnMut(IngestEvent),
    ) -> Result<(), AdapterError> {
        while let Some(update) = recognizer.next_update()? {
            self.on_update(update).into_iter().for_each(&mut sink);
        }
        Ok(())
    }
}
