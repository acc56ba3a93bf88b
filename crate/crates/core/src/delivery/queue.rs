use std::collections::VecDeque;

use super::protocol::{SegmentMsg, ServerMessage};

pub const QUEUE_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Queued,
    /// Replaced a queued open message for the same segment.
    Coalesced,
    /// An ephemeral message was discarded for lack of room.
    Dropped,
    /// A message that must not be dropped did not fit.
    TooSlow,
}

/// Bounded per-session outbound queue.
///
/// Open and revised segment messages coalesce in place by segment id, so at
/// most one is queued per segment. Finals and control messages are never
/// dropped: they first make room by discarding queued open messages, and
/// report `TooSlow` only when the queue holds nothing else to discard.
#[derive(Debug, Clone)]
pub struct OutboundQueue {
    items: VecDeque<ServerMessage>,
    capacity: usize,
    dropped: u64,
}

fn open_segment(msg: &ServerMessage) -> Option<&SegmentMsg> {
    match msg {
        ServerMessage::Segment(m) if !m.is_final() => Some(m),
        _ => None,
    }
}

impl Default for OutboundQueue {
    fn default() -> Self {
        OutboundQueue::new(QUEUE_CAPACITY)
    }
}

impl OutboundQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        OutboundQueue {
            items: VecDeque::with_capacity(capacity.min(QUEUE_CAPACITY)),
            capacity,
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Ephemeral messages discarded so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pop(&mut self) -> Option<ServerMessage> {
        self.items.pop_front()
    }

    pub fn drain(&mut self) -> impl Iterator<Item = ServerMessage> + '_ {
        self.items.drain(..)
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &ServerMessage> {
        self.items.iter()
    }

    pub fn push(&mut self, msg: ServerMessage) -> PushOutcome {
        if let Some(m) = open_segment(&msg) {
            let id = m.id.clone();
            if let Some(slot) = self
                .items
                .iter_mut()
                .find(|q| open_segment(q).is_some_and(|o| o.id == id))
            {
                *slot = msg;
                return PushOutcome::Coalesced;
            }
            return self.push_or_drop(msg);
        }
        match &msg {
            ServerMessage::Ping => self.push_or_drop(msg),
            ServerMessage::Segment(fin) => {
                let id = fin.id.clone();
                let before = self.items.len();
                self.items
                    .retain(|q| open_segment(q).is_none_or(|o| o.id != id));
                self.dropped += (before - self.items.len()) as u64;
                self.push_reliable(msg)
            }
            _ => self.push_reliable(msg),
        }
    }

    fn push_or_drop(&mut self, msg: ServerMessage) -> PushOutcome {
        if self.items.len() < self.capacity {
            self.items.push_back(msg);
            PushOutcome::Queued
        } else {
            self.dropped += 1;
            PushOutcome::Dropped
        }
    }

    fn push_reliable(&mut self, msg: ServerMessage) -> PushOutcome {
        if self.items.len() >= self.capacity {
            let victim = self
                .items
                .iter()
                .position(|q| open_segment(q).is_some() || matches!(q, ServerMessage::Ping));
            match victim {
                Some(i) => {
                    self.items.remove(i);
                    self.dropped += 1;
                }
                None => return PushOutcome::TooSlow,
            }
        }
        self.items.push_back(msg);
        PushOutcome::Queued
    }
}
