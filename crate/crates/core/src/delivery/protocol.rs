//! Display-client wire messages. One JSON object per text frame.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::cue_model::{render_segment_text, CaptionSegment, CueKind, SegmentState};
use crate::preferences::PreferenceProfile;

pub const PROTOCOL_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SegmentTag {
    #[default]
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMsg {
    pub cat: CueKind,
    pub label: String,
    pub anchor: usize,
    pub conf: f64,
}

/// A segment as seen by one client: plain text, that client's rendering,
/// and the structured annotations for local re-rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentMsg {
    #[serde(rename = "type")]
    tag: SegmentTag,
    pub id: String,
    pub state: SegmentState,
    pub rev: u32,
    pub t0: u64,
    pub t1: u64,
    pub plain: String,
    pub rendered: String,
    pub annotations: Vec<AnnotationMsg>,
}

impl SegmentMsg {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: String,
        state: SegmentState,
        rev: u32,
        t0: u64,
        t1: u64,
        plain: String,
        rendered: String,
        annotations: Vec<AnnotationMsg>,
    ) -> Self {
        SegmentMsg {
            tag: SegmentTag::Segment,
            id,
            state,
            rev,
            t0,
            t1,
            plain,
            rendered,
            annotations,
        }
    }

    pub fn render(segment: &CaptionSegment, profile: &PreferenceProfile) -> Self {
        SegmentMsg::new(
            segment.segment_id.to_string(),
            segment.state,
            segment.revision,
            segment.t_start.0,
            segment.t_end.0,
            segment.plain_text(),
            render_segment_text(segment, &profile.render_options()),
            segment
                .annotations
                .iter()
                .map(|a| AnnotationMsg {
                    cat: a.category,
                    label: a.label.name().to_string(),
                    anchor: a.anchor,
                    conf: a.confidence,
                })
                .collect(),
        )
    }

    pub fn is_final(&self) -> bool {
        self.state == SegmentState::Final
    }
}

/// Everything the server sends.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    HelloAck {
        session: String,
        prefs: PreferenceProfile,
        resumed: bool,
        /// Set when a resume token was offered but not honoured.
        warning: Option<String>,
    },
    Snapshot {
        segments: Vec<SegmentMsg>,
        open: Option<SegmentMsg>,
        cursor: String,
    },
    Segment(SegmentMsg),
    PrefsAck {
        prefs: PreferenceProfile,
    },
    Error {
        code: String,
        detail: String,
    },
    Ping,
}

impl ServerMessage {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ServerMessage::HelloAck { .. } => "hello_ack",
            ServerMessage::Snapshot { .. } => "snapshot",
            ServerMessage::Segment(_) => "segment",
            ServerMessage::PrefsAck { .. } => "prefs_ack",
            ServerMessage::Error { .. } => "error",
            ServerMessage::Ping => "ping",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Control {
    HelloAck {
        session: String,
        prefs: PreferenceProfile,
        resumed: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    Snapshot {
        segments: Vec<SegmentMsg>,
        open: Option<SegmentMsg>,
        cursor: String,
    },
    PrefsAck {
        prefs: PreferenceProfile,
    },
    Error {
        code: String,
        detail: String,
    },
    Ping,
}

impl Serialize for ServerMessage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let control = match self.clone() {
            ServerMessage::Segment(m) => return m.serialize(s),
            ServerMessage::HelloAck {
                session,
                prefs,
                resumed,
                warning,
            } => Control::HelloAck {
                session,
                prefs,
                resumed,
                warning,
            },
            ServerMessage::Snapshot { segments, open, cursor } => Control::Snapshot { segments, open, cursor },
            ServerMessage::PrefsAck { prefs } => Control::PrefsAck { prefs },
            ServerMessage::Error { code, detail } => Control::Error { code, detail },
            ServerMessage::Ping => Control::Ping,
        };
        control.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ServerMessage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = Value::deserialize(d)?;
        if value.get("type").and_then(Value::as_str) == Some("segment") {
            return SegmentMsg::deserialize(value).map(ServerMessage::Segment).map_err(D::Error::custom);
        }
        let control = Control::deserialize(value).map_err(D::Error::custom)?;
        Ok(match control {
            Control::HelloAck {
                session,
                prefs,
                resumed,
                warning,
            } => ServerMessage::HelloAck {
                session,
                prefs,
                resumed,
                warning,
            },
            Control::Snapshot { segments, open, cursor } => ServerMessage::Snapshot { segments, open, cursor },
            Control::PrefsAck { prefs } => ServerMessage::PrefsAck { prefs },
            Control::Error { code, detail } => ServerMessage::Error { code, detail },
            Control::Ping => ServerMessage::Ping,
        })
    }
}

/// Everything a client may send. Preference objects stay raw JSON so the
/// server can report which field was wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        v: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resume: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prefs: Option<Map<String, Value>>,
    },
    Prefs {
        patch: Map<String, Value>,
    },
    Pong,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    BadVersion(i64),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => "malformed",
            ProtocolError::BadVersion(_) => "bad_version",
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::error(self.code(), self.to_string())
    }
}

pub fn decode_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

pub fn encode_client(msg: &ClientMessage) -> String {
    serde_json::to_string(msg).expect("client messages always serialize")
}

pub fn decode_server(text: &str) -> Result<ServerMessage, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

/// What a display client holds: finals in order and at most one open line.
///
/// Applying a snapshot and then the deltas that follow it yields the same
/// view as having received every delta since the session began.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientView {
    pub finals: Vec<SegmentMsg>,
    pub open: Option<SegmentMsg>,
}

fn id_counter(id: &str) -> u64 {
    id.strip_prefix("seg-").and_then(|d| d.parse().ok()).unwrap_or(0)
}

impl ClientView {
    fn last_final_counter(&self) -> u64 {
        self.finals.last().map_or(0, |m| id_counter(&m.id))
    }

    pub fn apply(&mut self, msg: &ServerMessage) {
        match msg {
            ServerMessage::Snapshot { segments, open, .. } => {
                let after = self.last_final_counter();
                self.finals
                    .extend(segments.iter().filter(|m| id_counter(&m.id) > after).cloned());
                self.open = open.clone();
            }
            ServerMessage::Segment(m) => self.apply_segment(m),
            _ => {}
        }
    }

    fn apply_segment(&mut self, m: &SegmentMsg) {
        if m.is_final() {
            if self.open.as_ref().is_some_and(|o| o.id == m.id) {
                self.open = None;
            }
            if id_counter(&m.id) > self.last_final_counter() {
                self.finals.push(m.clone());
            }
        } else if self.open.as_ref().is_none_or(|o| id_counter(&o.id) <= id_counter(&m.id))
            && id_counter(&m.id) > self.last_final_counter()
        {
            self.open = Some(m.clone());
        }
    }
}
