//! Session registry and fan-out. Transport-agnostic: the server feeds it
//! decoded client messages and fusion emissions, and drains per-session
//! outbound queues onto the wire.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::cue_model::{CaptionSegment, SegmentState};
use crate::fusion::{Emission, EmissionKind};
use crate::preferences::{apply_patch, validate_patch, PrefError, PreferenceProfile, ProfilePatch};

use super::protocol::{ClientMessage, ProtocolError, SegmentMsg, ServerMessage, PROTOCOL_VERSION};
use super::queue::{OutboundQueue, PushOutcome, QUEUE_CAPACITY};

/// Finals included in a fresh join's snapshot.
pub const SNAPSHOT_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Live,
    /// Flush what is queued, then close.
    Closing,
    Disconnected,
}

#[derive(Debug, Clone)]
pub struct ClientSession {
    pub session_id: String,
    /// Counter of the last final segment handed to this session.
    pub last_acked_final: u64,
    pub profile: PreferenceProfile,
    pub link: Link,
    /// Bumped on every (re)connect so a stale writer can tell it lost the
    /// session.
    pub generation: u64,
    pub queue: OutboundQueue,
}

impl ClientSession {
    pub fn resume_token(&self) -> String {
        resume_token(&self.session_id, self.last_acked_final)
    }

    pub fn connected(&self) -> bool {
        self.link == Link::Live
    }
}

pub fn resume_token(session_id: &str, cursor: u64) -> String {
    format!("{session_id}:{cursor:x}")
}

pub fn parse_resume_token(token: &str) -> Option<(&str, u64)> {
    let (sid, cursor) = token.split_once(':')?;
    if sid.len() != 16 || !sid.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    Some((sid, u64::from_str_radix(cursor, 16).ok()?))
}

/// Identifies one connection of a session.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Handle {
    pub session_id: String,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drain {
    pub messages: Vec<ServerMessage>,
    /// The writer should close the connection after sending `messages`.
    pub close: bool,
}

#[derive(Debug)]
pub struct Hub {
    sessions: HashMap<String, ClientSession>,
    finals: Vec<CaptionSegment>,
    open: Option<CaptionSegment>,
    queue_capacity: usize,
    rng: StdRng,
}

impl Default for Hub {
    fn default() -> Self {
        Hub::new()
    }
}

fn counter_of(segment: &CaptionSegment) -> u64 {
    segment.segment_id.counter().unwrap_or(0)
}

fn pref_error(e: &PrefError) -> ServerMessage {
    match e {
        PrefError::InvalidPreference { field, reason } => {
            ServerMessage::error("invalid_preference", format!("{field}: {reason}"))
        }
        other => ServerMessage::error("invalid_preference", other.to_string()),
    }
}

impl Hub {
    pub fn new() -> Self {
        Hub::with_rng(StdRng::from_os_rng(), QUEUE_CAPACITY)
    }

    /// Deterministic session ids, for tests.
    pub fn seeded(seed: u64, queue_capacity: usize) -> Self {
        Hub::with_rng(StdRng::seed_from_u64(seed), queue_capacity)
    }

    fn with_rng(rng: StdRng, queue_capacity: usize) -> Self {
        Hub {
            sessions: HashMap::new(),
            finals: Vec::new(),
            open: None,
            queue_capacity,
            rng,
        }
    }

    pub fn finals(&self) -> &[CaptionSegment] {
        &self.finals
    }

    pub fn open(&self) -> Option<&CaptionSegment> {
        self.open.as_ref()
    }

    pub fn session(&self, id: &str) -> Option<&ClientSession> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &ClientSession> {
        self.sessions.values()
    }

    fn fresh_id(&mut self) -> String {
        loop {
            let id = format!("{:016x}", self.rng.random::<u64>());
            if !self.sessions.contains_key(&id) {
                return id;
            }
        }
    }

    fn latest_final(&self) -> u64 {
        self.finals.last().map_or(0, counter_of)
    }

    /// Runs the hello exchange. On success the session's queue holds
    /// `hello_ack` and `snapshot` (preceded by an error if the offered
    /// preferences were invalid, in which case defaults apply). A version
    /// mismatch returns the error to send before closing.
    pub fn handshake(&mut self, hello: &ClientMessage) -> Result<Handle, ServerMessage> {
        let ClientMessage::Hello { v, resume, prefs } = hello else {
            return Err(ProtocolError::Malformed("expected hello".into()).to_message());
        };
        if *v != PROTOCOL_VERSION {
            return Err(ProtocolError::BadVersion(*v).to_message());
        }
        let mut preamble = Vec::new();
        let offered = match prefs {
            None => None,
            Some(raw) => match validate_patch(raw) {
                Ok(patch) => Some(patch),
                Err(e) => {
                    preamble.push(pref_error(&e));
                    None
                }
            },
        };

        let latest = self.latest_final();
        let resumable = resume
            .as_deref()
            .and_then(parse_resume_token)
            .filter(|(sid, cursor)| self.sessions.contains_key(*sid) && *cursor <= latest)
            .map(|(sid, cursor)| (sid.to_string(), cursor));
        let warning = match (resume, &resumable) {
            (Some(_), None) => Some("invalid_resume_token".to_string()),
            _ => None,
        };

        let (id, resumed, cursor) = match resumable {
            Some((sid, cursor)) => (sid, true, Some(cursor)),
            None => {
                let id = self.fresh_id();
                let session = ClientSession {
                    session_id: id.clone(),
                    last_acked_final: 0,
                    profile: PreferenceProfile::default(),
                    link: Link::Disconnected,
                    generation: 0,
                    queue: OutboundQueue::new(self.queue_capacity),
                };
                self.sessions.insert(id.clone(), session);
                (id, false, None)
            }
        };

        let snapshot_finals: Vec<CaptionSegment> = match cursor {
            Some(c) => self.finals.iter().filter(|s| counter_of(s) > c).cloned().collect(),
            None => {
                let skip = self.finals.len().saturating_sub(SNAPSHOT_WINDOW);
                self.finals[skip..].to_vec()
            }
        };
        let open = self.open.clone();

        let session = self.sessions.get_mut(&id).expect("session just ensured");
        if let Some(patch) = offered {
            session.profile = apply_patch(&session.profile, &patch);
        }
        session.generation += 1;
        session.link = Link::Live;
        session.queue.clear();
        session.last_acked_final = session.last_acked_final.max(latest);
        let profile = session.profile.clone();
        let cursor = session.resume_token();
        for msg in preamble {
            session.queue.push(msg);
        }
        session.queue.push(ServerMessage::HelloAck {
            session: id.clone(),
            prefs: profile.clone(),
            resumed,
            warning,
        });
        session.queue.push(ServerMessage::Snapshot {
            segments: snapshot_finals.iter().map(|s| SegmentMsg::render(s, &profile)).collect(),
            open: open.as_ref().map(|s| SegmentMsg::render(s, &profile)),
            cursor,
        });
        Ok(Handle {
            session_id: id,
            generation: session.generation,
        })
    }

    /// Handles a post-handshake client message.
    pub fn handle_client(&mut self, handle: &Handle, msg: &ClientMessage) {
        let Some(session) = self.live_session(handle) else { return };
        let reply = match msg {
            ClientMessage::Pong => return,
            ClientMessage::Hello { .. } => ServerMessage::error("unexpected_hello", "session already established"),
            ClientMessage::Prefs { patch } => match validate_patch(patch) {
                Ok(patch) => {
                    session.profile = apply_patch(&session.profile, &patch);
                    ServerMessage::PrefsAck {
                        prefs: session.profile.clone(),
                    }
                }
                Err(e) => pref_error(&e),
            },
        };
        Self::push(session, reply);
    }

    /// Applies a validated patch to a session directly.
    pub fn update_profile(&mut self, handle: &Handle, patch: &ProfilePatch) -> Option<PreferenceProfile> {
        let session = self.live_session(handle)?;
        session.profile = apply_patch(&session.profile, patch);
        Some(session.profile.clone())
    }

    fn live_session(&mut self, handle: &Handle) -> Option<&mut ClientSession> {
        self.sessions
            .get_mut(&handle.session_id)
            .filter(|s| s.generation == handle.generation && s.link == Link::Live)
    }

    fn push(session: &mut ClientSession, msg: ServerMessage) {
        if session.queue.push(msg) == PushOutcome::TooSlow {
            tracing::warn!(session = %session.session_id, "outbound queue full of finals; disconnecting");
            session.queue.clear();
            session
                .queue
                .push(ServerMessage::error("too_slow", "client is not keeping up with final segments"));
            session.link = Link::Closing;
        }
    }

    /// Records an emission and queues a rendered copy for every live
    /// session. Returns ids of sessions that became too slow.
    pub fn publish(&mut self, emission: &Emission) -> Vec<String> {
        let segment = &emission.segment;
        match emission.kind {
            EmissionKind::SegmentFinal => {
                if self.open.as_ref().is_some_and(|o| o.segment_id == segment.segment_id) {
                    self.open = None;
                }
                self.finals.push(segment.clone());
            }
            EmissionKind::SegmentOpen | EmissionKind::SegmentRevised => {
                debug_assert_eq!(segment.state, SegmentState::Open);
                if self.open.as_ref().is_none_or(|o| counter_of(o) <= counter_of(segment)) {
                    self.open = Some(segment.clone());
                }
            }
        }
        let is_final = emission.kind == EmissionKind::SegmentFinal;
        let counter = counter_of(segment);
        let mut slow = Vec::new();
        for session in self.sessions.values_mut().filter(|s| s.link == Link::Live) {
            let msg = ServerMessage::Segment(SegmentMsg::render(segment, &session.profile));
            Self::push(session, msg);
            if session.link == Link::Closing {
                slow.push(session.session_id.clone());
            } else if is_final {
                session.last_acked_final = session.last_acked_final.max(counter);
            }
        }
        slow
    }

    pub fn ping_all(&mut self) {
        for session in self.sessions.values_mut().filter(|s| s.link == Link::Live) {
            session.queue.push(ServerMessage::Ping);
        }
    }

    /// Takes everything queued for this connection. A superseded or closed
    /// connection gets `close` with no messages.
    pub fn drain(&mut self, handle: &Handle) -> Drain {
        let Some(session) = self
            .sessions
            .get_mut(&handle.session_id)
            .filter(|s| s.generation == handle.generation)
        else {
            return Drain {
                messages: Vec::new(),
                close: true,
            };
        };
        let messages = session.queue.drain().collect();
        let close = match session.link {
            Link::Live => false,
            Link::Closing => {
                session.link = Link::Disconnected;
                true
            }
            Link::Disconnected => true,
        };
        Drain { messages, close }
    }

    /// The connection went away. Sessions are kept so they can be resumed.
    pub fn disconnect(&mut self, handle: &Handle) {
        if let Some(session) = self
            .sessions
            .get_mut(&handle.session_id)
            .filter(|s| s.generation == handle.generation)
        {
            session.link = Link::Disconnected;
            session.queue.clear();
        }
    }
}
