//! NDJSON ingest records.
//!
//! One UTF-8 JSON object per LF-terminated line. Field order on encode is fixed
//! so that re-encoded records are byte-stable:
//!
//! ```text
//! {"v":1,"src":"asr","type":"token","seq":1,"t0":0,"t1":250,"text":"Hello","speaker":"S1","stability":"final","conf":0.9}
//! {"v":1,"src":"affect","type":"cue","seq":1,"t0":100,"t1":900,"kind":"tone","label":"concerned","conf":0.8}
//! {"v":1,"src":"asr","type":"watermark","t":500}
//! {"v":1,"src":"prosody","type":"frame","t":100,"rms":0.4,"f0m":180.0,"f0v":220.0,"rate":4.1}
//! ```

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::cue_model::{validate_label, CueEvent, CueKind, ModelError, Stability, Timestamp, TranscriptToken};

use super::prosody::ProsodyFrame;

pub const WIRE_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Asr,
    Affect,
    Gesture,
    Prosody,
}

impl Source {
    /// The three streams merged by the fusion engine.
    pub const FUSED: [Source; 3] = [Source::Asr, Source::Affect, Source::Gesture];
    pub const ALL: [Source; 4] = [Source::Asr, Source::Affect, Source::Gesture, Source::Prosody];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Asr => "asr",
            Source::Affect => "affect",
            Source::Gesture => "gesture",
            Source::Prosody => "prosody",
        }
    }

    /// Position in [`Source::FUSED`]; also the batch tie-break priority.
    pub fn fused_index(self) -> Option<usize> {
        match self {
            Source::Asr => Some(0),
            Source::Affect => Some(1),
            Source::Gesture => Some(2),
            Source::Prosody => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Source::Asr => 0,
            Source::Affect => 1,
            Source::Gesture => 2,
            Source::Prosody => 3,
        }
    }

    /// Cue kind carried by this source, if it carries cues.
    pub fn cue_kind(self) -> Option<CueKind> {
        match self {
            Source::Affect => Some(CueKind::Tone),
            Source::Gesture => Some(CueKind::Gesture),
            _ => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == s)
            .ok_or(IngestError::SchemaViolation("src"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WatermarkBeat {
    pub source: Source,
    pub t: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Token(TranscriptToken),
    Cue(CueEvent),
    Watermark(WatermarkBeat),
    Frame(ProsodyFrame<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestEvent {
    pub source: Source,
    pub payload: Payload,
}

impl IngestEvent {
    pub fn token(token: TranscriptToken) -> Self {
        IngestEvent {
            source: Source::Asr,
            payload: Payload::Token(token),
        }
    }

    pub fn cue(cue: CueEvent) -> Self {
        let source = match cue.kind() {
            CueKind::Tone => Source::Affect,
            CueKind::Gesture => Source::Gesture,
        };
        IngestEvent {
            source,
            payload: Payload::Cue(cue),
        }
    }

    pub fn watermark(source: Source, t: Timestamp) -> Self {
        IngestEvent {
            source,
            payload: Payload::Watermark(WatermarkBeat { source, t }),
        }
    }

    pub fn frame(frame: ProsodyFrame<f64>) -> Self {
        IngestEvent {
            source: Source::Prosody,
            payload: Payload::Frame(frame),
        }
    }

    /// Sequence number of tokens and cues.
    pub fn seq(&self) -> Option<u64> {
        match &self.payload {
            Payload::Token(t) => Some(t.source_seq),
            Payload::Cue(c) => Some(c.source_seq),
            _ => None,
        }
    }

    /// Event time used for ordering and replay pacing.
    pub fn start(&self) -> Timestamp {
        match &self.payload {
            Payload::Token(t) => t.t_start,
            Payload::Cue(c) => c.t_start,
            Payload::Watermark(w) => w.t,
            Payload::Frame(f) => f.t,
        }
    }

    /// Latest time this event mentions.
    pub fn end(&self) -> Timestamp {
        match &self.payload {
            Payload::Token(t) => t.t_end,
            Payload::Cue(c) => c.t_end,
            Payload::Watermark(w) => w.t,
            Payload::Frame(f) => f.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("malformed json: {0}")]
    MalformedJson(String),
    #[error("unsupported version {0}")]
    UnsupportedVersion(i64),
    #[error("schema violation in field {0:?}")]
    SchemaViolation(&'static str),
    #[error(transparent)]
    UnknownLabel(ModelError),
}

impl IngestError {
    /// Metrics bucket name.
    pub fn reason(&self) -> &'static str {
        match self {
            IngestError::MalformedJson(_) => "malformed_json",
            IngestError::UnsupportedVersion(_) => "unsupported_version",
            IngestError::SchemaViolation(_) => "schema_violation",
            IngestError::UnknownLabel(_) => "unknown_label",
        }
    }
}

type Fields = Map<String, Value>;

fn field<'a>(obj: &'a Fields, name: &'static str) -> Result<&'a Value, IngestError> {
    obj.get(name).ok_or(IngestError::SchemaViolation(name))
}

fn str_field<'a>(obj: &'a Fields, name: &'static str) -> Result<&'a str, IngestError> {
    field(obj, name)?
        .as_str()
        .ok_or(IngestError::SchemaViolation(name))
}

fn uint_field(obj: &Fields, name: &'static str) -> Result<u64, IngestError> {
    field(obj, name)?
        .as_u64()
        .ok_or(IngestError::SchemaViolation(name))
}

fn real_field(obj: &Fields, name: &'static str) -> Result<f64, IngestError> {
    field(obj, name)?
        .as_f64()
        .filter(|x| x.is_finite())
        .ok_or(IngestError::SchemaViolation(name))
}

fn ms_field(obj: &Fields, name: &'static str) -> Result<Timestamp, IngestError> {
    uint_field(obj, name).map(Timestamp)
}

fn seq_field(obj: &Fields) -> Result<u64, IngestError> {
    match uint_field(obj, "seq")? {
        0 => Err(IngestError::SchemaViolation("seq")),
        n => Ok(n),
    }
}

fn conf_field(obj: &Fields) -> Result<f64, IngestError> {
    let c = real_field(obj, "conf")?;
    if (0.0..=1.0).contains(&c) {
        Ok(c)
    } else {
        Err(IngestError::SchemaViolation("conf"))
    }
}

fn span(obj: &Fields) -> Result<(Timestamp, Timestamp), IngestError> {
    let t0 = ms_field(obj, "t0")?;
    let t1 = ms_field(obj, "t1")?;
    if t0 > t1 {
        return Err(IngestError::SchemaViolation("t1"));
    }
    Ok((t0, t1))
}

fn non_negative(obj: &Fields, name: &'static str) -> Result<f64, IngestError> {
    let x = real_field(obj, name)?;
    if x < 0.0 {
        return Err(IngestError::SchemaViolation(name));
    }
    Ok(x)
}

/// Best-effort source of a line, used to attribute rejects in metrics.
pub fn peek_source(line: &[u8]) -> Option<Source> {
    let v: Value = serde_json::from_slice(line).ok()?;
    v.get("src")?.as_str()?.parse().ok()
}

/// Parses one record. A trailing `\n` (and `\r`) is tolerated.
pub fn decode_event(line: &[u8]) -> Result<IngestEvent, IngestError> {
    let text = std::str::from_utf8(line).map_err(|e| IngestError::MalformedJson(e.to_string()))?;
    let text = text.trim_end_matches(['\n', '\r']);
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| IngestError::MalformedJson("expected a JSON object".into()))?;

    let version = field(obj, "v")?
        .as_i64()
        .ok_or(IngestError::SchemaViolation("v"))?;
    if version != WIRE_VERSION {
        return Err(IngestError::UnsupportedVersion(version));
    }
    let source: Source = str_field(obj, "src")?.parse()?;
    let record_type = str_field(obj, "type")?;

    let payload = match (source, record_type) {
        (Source::Prosody, "frame") => Payload::Frame(ProsodyFrame {
            t: ms_field(obj, "t")?,
            rms_energy: non_negative(obj, "rms")?,
            f0_mean: non_negative(obj, "f0m")?,
            f0_var: non_negative(obj, "f0v")?,
            rate: non_negative(obj, "rate")?,
        }),
        (Source::Prosody, _) => return Err(IngestError::SchemaViolation("type")),
        (_, "watermark") => Payload::Watermark(WatermarkBeat {
            source,
            t: ms_field(obj, "t")?,
        }),
        (Source::Asr, "token") => {
            let (t_start, t_end) = span(obj)?;
            let stability = match str_field(obj, "stability")? {
                "partial" => Stability::Partial,
                "final" => Stability::Final,
                _ => return Err(IngestError::SchemaViolation("stability")),
            };
            let token = TranscriptToken {
                source_seq: seq_field(obj)?,
                text: str_field(obj, "text")?.to_string(),
                t_start,
                t_end,
                speaker_id: str_field(obj, "speaker")?.to_string(),
                stability,
                confidence: conf_field(obj)?,
            };
            token
                .validate()
                .map_err(|_| IngestError::SchemaViolation("text"))?;
            Payload::Token(token)
        }
        (Source::Affect | Source::Gesture, "cue") => {
            let kind: CueKind = str_field(obj, "kind")?
                .parse()
                .map_err(|_| IngestError::SchemaViolation("kind"))?;
            if Some(kind) != source.cue_kind() {
                return Err(IngestError::SchemaViolation("kind"));
            }
            let label = validate_label(kind, str_field(obj, "label")?).map_err(IngestError::UnknownLabel)?;
            let (t_start, t_end) = span(obj)?;
            Payload::Cue(CueEvent {
                source_seq: seq_field(obj)?,
                label,
                t_start,
                t_end,
                confidence: conf_field(obj)?,
                source_id: source.as_str().to_string(),
            })
        }
        _ => return Err(IngestError::SchemaViolation("type")),
    };
    Ok(IngestEvent { source, payload })
}

#[derive(Serialize)]
struct TokenWire<'a> {
    v: i64,
    src: &'static str,
    #[serde(rename = "type")]
    record_type: &'static str,
    seq: u64,
    t0: u64,
    t1: u64,
    text: &'a str,
    speaker: &'a str,
    stability: Stability,
    conf: f64,
}

#[derive(Serialize)]
struct CueWire {
    v: i64,
    src: &'static str,
    #[serde(rename = "type")]
    record_type: &'static str,
    seq: u64,
    t0: u64,
    t1: u64,
    kind: CueKind,
    label: &'static str,
    conf: f64,
}

#[derive(Serialize)]
struct WatermarkWire {
    v: i64,
    src: &'static str,
    #[serde(rename = "type")]
    record_type: &'static str,
    t: u64,
}

#[derive(Serialize)]
struct FrameWire {
    v: i64,
    src: &'static str,
    #[serde(rename = "type")]
    record_type: &'static str,
    t: u64,
    rms: f64,
    f0m: f64,
    f0v: f64,
    rate: f64,
}

/// Encodes one record without the trailing newline.
pub fn encode_event(event: &IngestEvent) -> String {
    let src = event.source.as_str();
    let out = match &event.payload {
        Payload::Token(t) => serde_json::to_string(&TokenWire {
            v: WIRE_VERSION,
            src,
            record_type: "token",
            seq: t.source_seq,
            t0: t.t_start.0,
            t1: t.t_end.0,
            text: &t.text,
            speaker: &t.speaker_id,
            stability: t.stability,
            conf: t.confidence,
        }),
        Payload::Cue(c) => serde_json::to_string(&CueWire {
            v: WIRE_VERSION,
            src,
            record_type: "cue",
            seq: c.source_seq,
            t0: c.t_start.0,
            t1: c.t_end.0,
            kind: c.kind(),
            label: c.label.name(),
            conf: c.confidence,
        }),
        Payload::Watermark(w) => serde_json::to_string(&WatermarkWire {
            v: WIRE_VERSION,
            src,
            record_type: "watermark",
            t: w.t.0,
        }),
        Payload::Frame(f) => serde_json::to_string(&FrameWire {
            v: WIRE_VERSION,
            src,
            record_type: "frame",
            t: f.t.0,
            rms: f.rms_energy,
            f0m: f.f0_mean,
            f0v: f.f0_var,
            rate: f.rate,
        }),
    };
    out.expect("ingest records always serialize")
}
