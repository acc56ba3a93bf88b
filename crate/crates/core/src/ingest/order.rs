//! Per-source ordering gate: contiguous sequence numbers, non-decreasing start
//! times, nothing behind the source's own watermark.

use std::fmt;

use crate::cue_model::Timestamp;

use super::codec::{IngestEvent, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceState {
    pub last_seq: u64,
    pub last_t: Timestamp,
    pub dropped_count: u64,
    pub watermark: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// Sequence number skipped ahead.
    Gap,
    /// Sequence number repeated or went backwards.
    Regressed,
    /// Start time earlier than the previous event from this source.
    OutOfOrder,
    /// Start time behind the source's watermark.
    Late,
    /// Watermark beat lower than the current watermark.
    WatermarkRegressed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::Gap,
        RejectReason::Regressed,
        RejectReason::OutOfOrder,
        RejectReason::Late,
        RejectReason::WatermarkRegressed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Gap => "gap",
            RejectReason::Regressed => "regressed",
            RejectReason::OutOfOrder => "out_of_order",
            RejectReason::Late => "late",
            RejectReason::WatermarkRegressed => "watermark_regressed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderVerdict {
    Accept,
    Reject(RejectReason),
}

impl OrderVerdict {
    pub fn is_accept(self) -> bool {
        self == OrderVerdict::Accept
    }
}

/// Checks `ev` against the source state, updating it on accept and bumping
/// `dropped_count` on reject.
pub fn check_stream_order(state: &mut SourceState, ev: &IngestEvent) -> OrderVerdict {
    let verdict = match &ev.payload {
        Payload::Watermark(w) => {
            if w.t < state.watermark {
                OrderVerdict::Reject(RejectReason::WatermarkRegressed)
            } else {
                state.watermark = w.t;
                OrderVerdict::Accept
            }
        }
        Payload::Frame(f) => {
            if f.t < state.last_t {
                OrderVerdict::Reject(RejectReason::OutOfOrder)
            } else {
                state.last_t = f.t;
                OrderVerdict::Accept
            }
        }
        Payload::Token(_) | Payload::Cue(_) => {
            let seq = ev.seq().expect("tokens and cues carry a seq");
            let t = ev.start();
            if seq <= state.last_seq {
                OrderVerdict::Reject(RejectReason::Regressed)
            } else if seq != state.last_seq + 1 {
                OrderVerdict::Reject(RejectReason::Gap)
            } else if t < state.last_t {
                OrderVerdict::Reject(RejectReason::OutOfOrder)
            } else if t < state.watermark {
                OrderVerdict::Reject(RejectReason::Late)
            } else {
                state.last_seq = seq;
                state.last_t = t;
                OrderVerdict::Accept
            }
        }
    };
    if !verdict.is_accept() {
        state.dropped_count += 1;
    }
    verdict
}
