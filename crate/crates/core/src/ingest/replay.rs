//! Deterministic replay of recorded NDJSON sessions.

use std::io::{self, BufRead};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cue_model::Timestamp;

use super::codec::{decode_event, IngestError, IngestEvent, Source};

/// Time source for paced replay.
pub trait Clock {
    /// Time since the clock was created.
    fn elapsed(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: sleeping advances time instantly and is logged.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().expect("clock poisoned").clone()
    }
}

impl Clock for ManualClock {
    fn elapsed(&self) -> Duration {
        *self.now.lock().expect("clock poisoned")
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().expect("clock poisoned") += d;
        self.sleeps.lock().expect("clock poisoned").push(d);
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn elapsed(&self) -> Duration {
        (**self).elapsed()
    }

    fn sleep(&self, d: Duration) {
        (**self).sleep(d)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("session file unreadable: {0}")]
    FileUnreadable(#[from] io::Error),
    #[error("line {line}: malformed json: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("replay speed must be finite and non-negative, got {0}")]
    BadSpeed(f64),
}

/// One replayed line.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplayItem {
    /// A decoded record, with its 1-based line number and raw text.
    Event {
        line: usize,
        raw: String,
        event: IngestEvent,
    },
    /// A line that decoded to a non-fatal error (bad version, schema,
    /// label). The caller counts and drops it.
    Rejected {
        line: usize,
        raw: String,
        error: IngestError,
    },
    /// Synthesized end-of-session watermark, one per fused source.
    Terminal(IngestEvent),
}

impl ReplayItem {
    pub fn event(&self) -> Option<&IngestEvent> {
        match self {
            ReplayItem::Event { event, .. } | ReplayItem::Terminal(event) => Some(event),
            ReplayItem::Rejected { .. } => None,
        }
    }
}

/// Iterator over a session file, pacing emissions by event time.
///
/// With speed `s > 0` consecutive emissions are spaced by their start-time
/// difference divided by `s`; speed 0 never sleeps. After the last line a
/// watermark at `max(t_end) + 1` is appended for each fused source.
pub struct Replay<R, C> {
    reader: R,
    clock: C,
    speed: f64,
    line_no: usize,
    base: Option<(Timestamp, Duration)>,
    last_target: Duration,
    max_t: u64,
    current_t: Timestamp,
    terminal: Option<std::vec::IntoIter<IngestEvent>>,
    failed: bool,
}

impl<R: BufRead, C: Clock> Replay<R, C> {
    pub fn new(reader: R, speed: f64, clock: C) -> Result<Self, ReplayError> {
        if !speed.is_finite() || speed < 0.0 {
            return Err(ReplayError::BadSpeed(speed));
        }
        Ok(Replay {
            reader,
            clock,
            speed,
            line_no: 0,
            base: None,
            last_target: Duration::ZERO,
            max_t: 0,
            current_t: Timestamp::ZERO,
            terminal: None,
            failed: false,
        })
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    /// Current position in session time.
    ///
    /// Paced replays derive this from the clock, speed-0 replays from the
    /// start time of the latest emitted record.
    pub fn session_now(&self) -> Timestamp {
        match self.base {
            Some((t0, wall0)) if self.speed > 0.0 => {
                let wall = self.clock.elapsed().saturating_sub(wall0);
                Timestamp(t0.0 + (wall.as_secs_f64() * 1000.0 * self.speed) as u64)
            }
            _ => self.current_t,
        }
    }

    fn pace(&mut self, t: Timestamp) {
        self.current_t = self.current_t.max(t);
        if self.speed == 0.0 {
            return;
        }
        let (t0, wall0) = *self
            .base
            .get_or_insert_with(|| (t, self.clock.elapsed()));
        let offset_ms = t.0.saturating_sub(t0.0) as f64 / self.speed;
        let target = (wall0 + Duration::from_secs_f64(offset_ms / 1000.0)).max(self.last_target);
        self.last_target = target;
        let now = self.clock.elapsed();
        if target > now {
            self.clock.sleep(target - now);
        }
    }

    fn next_line(&mut self) -> Option<Result<ReplayItem, ReplayError>> {
        loop {
            let mut buf = String::new();
            match self.reader.read_line(&mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(ReplayError::FileUnreadable(e))),
            }
            self.line_no += 1;
            let raw = buf.trim_end_matches(['\n', '\r']).to_string();
            if raw.trim().is_empty() {
                continue;
            }
            return Some(match decode_event(raw.as_bytes()) {
                Ok(event) => {
                    self.max_t = self.max_t.max(event.end().0);
                    self.pace(event.start());
                    Ok(ReplayItem::Event {
                        line: self.line_no,
                        raw,
                        event,
                    })
                }
                Err(IngestError::MalformedJson(message)) => Err(ReplayError::MalformedJson {
                    line: self.line_no,
                    message,
                }),
                Err(error) => Ok(ReplayItem::Rejected {
                    line: self.line_no,
                    raw,
                    error,
                }),
            });
        }
    }
}

impl<R: BufRead, C: Clock> Iterator for Replay<R, C> {
    type Item = Result<ReplayItem, ReplayError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.terminal.is_none() {
            match self.next_line() {
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Some(ok) => return Some(ok),
                None => {
                    let t = Timestamp(self.max_t + 1);
                    self.terminal = Some(terminal_watermarks(t).into_iter());
                }
            }
        }
        let ev = self.terminal.as_mut()?.next()?;
        self.pace(ev.start());
        Some(Ok(ReplayItem::Terminal(ev)))
    }
}

pub fn terminal_watermarks(t: Timestamp) -> Vec<IngestEvent> {
    Source::FUSED
        .into_iter()
        .map(|s| IngestEvent::watermark(s, t))
        .collect()
}
