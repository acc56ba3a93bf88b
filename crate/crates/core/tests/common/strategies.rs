//! proptest generators for wire-level values.

use capfuse_core::cue_model::{CueEvent, CueLabel, SegmentState, Stability, TranscriptToken, Verbosity};
use capfuse_core::delivery::{AnnotationMsg, ClientMessage, SegmentMsg, ServerMessage};
use capfuse_core::ingest::{IngestEvent, Source};
use capfuse_core::preferences::{Contrast, Placement, PreferenceProfile};
use capfuse_core::{CueKind, ProsodyFrame, Timestamp};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

pub fn unit_f64() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0]
}

pub fn word() -> impl Strategy<Value = String> {
    "[^\\s\\[\\]]{1,12}( [^\\s\\[\\]]{1,8})?"
}

pub fn span() -> impl Strategy<Value = (u64, u64)> {
    (0u64..10_000_000, 0u64..100_000).prop_map(|(a, d)| (a, a + d))
}

pub fn token() -> impl Strategy<Value = TranscriptToken> {
    (1u64..u32::MAX as u64, word(), span(), "[A-Za-z0-9_-]{1,6}", any::<bool>(), unit_f64()).prop_map(
        |(seq, text, (a, b), speaker, fin, conf)| TranscriptToken {
            source_seq: seq,
            text,
            t_start: Timestamp(a),
            t_end: Timestamp(b),
            speaker_id: speaker,
            stability: if fin { Stability::Final } else { Stability::Partial },
            confidence: conf,
        },
    )
}

pub fn label() -> impl Strategy<Value = CueLabel> {
    proptest::sample::select(CueLabel::all().collect::<Vec<_>>())
}

pub fn cue() -> impl Strategy<Value = CueEvent> {
    (1u64..u32::MAX as u64, label(), span(), unit_f64()).prop_map(|(seq, label, (a, b), conf)| CueEvent {
        source_seq: seq,
        label,
        t_start: Timestamp(a),
        t_end: Timestamp(b),
        confidence: conf,
        source_id: match label.kind() {
            CueKind::Tone => "affect".into(),
            CueKind::Gesture => "gesture".into(),
        },
    })
}

pub fn ingest_event() -> impl Strategy<Value = IngestEvent> {
    let features = (0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e3);
    prop_oneof![
        token().prop_map(IngestEvent::token),
        cue().prop_map(IngestEvent::cue),
        (proptest::sample::select(Source::FUSED.to_vec()), 0u64..u64::MAX / 4)
            .prop_map(|(s, t)| IngestEvent::watermark(s, Timestamp(t))),
        (0u64..10_000_000, features).prop_map(|(t, (rms, f0m, f0v, rate))| IngestEvent::frame(ProsodyFrame {
            t: Timestamp(t),
            rms_energy: rms,
            f0_mean: f0m,
            f0_var: f0v,
            rate,
        })),
    ]
}

pub fn profile() -> impl Strategy<Value = PreferenceProfile> {
    (
        0.5f64..=3.0,
        proptest::sample::select(vec![Contrast::Light, Contrast::Dark, Contrast::HighContrast]),
        proptest::sample::select(vec![Placement::Bottom, Placement::Top, Placement::NearSpeaker]),
        proptest::sample::select(vec![Verbosity::Off, Verbosity::Minimal, Verbosity::Verbose]),
        any::<bool>(),
        any::<bool>(),
        1u8..=5,
    )
        .prop_map(|(font_scale, contrast, placement, verbosity, show_tone, show_gestures, max_lines)| {
            PreferenceProfile {
                font_scale,
                contrast,
                placement,
                verbosity,
                show_tone,
                show_gestures,
                max_lines,
            }
        })
}

pub fn segment_msg() -> impl Strategy<Value = SegmentMsg> {
    let ann = (label(), 0usize..20, unit_f64()).prop_map(|(l, anchor, conf)| AnnotationMsg {
        cat: l.kind(),
        label: l.name().to_string(),
        anchor,
        conf,
    });
    (
        1u64..1_000_000,
        any::<bool>(),
        0u32..1000,
        span(),
        ".{0,40}",
        ".{0,60}",
        proptest::collection::vec(ann, 0..4),
    )
        .prop_map(|(n, fin, rev, (a, b), plain, rendered, annotations)| {
            SegmentMsg::new(
                format!("seg-{n:06}"),
                if fin { SegmentState::Final } else { SegmentState::Open },
                rev,
                a,
                b,
                plain,
                rendered,
                annotations,
            )
        })
}

pub fn server_message() -> impl Strategy<Value = ServerMessage> {
    let sid = "[0-9a-f]{16}";
    prop_oneof![
        (sid, profile(), any::<bool>(), proptest::option::of("[a-z_]{1,20}")).prop_map(|(session, prefs, resumed, warning)| {
            ServerMessage::HelloAck {
                session,
                prefs,
                resumed,
                warning,
            }
        }),
        (
            proptest::collection::vec(segment_msg(), 0..5),
            proptest::option::of(segment_msg()),
            ".{0,30}"
        )
            .prop_map(|(segments, open, cursor)| ServerMessage::Snapshot { segments, open, cursor }),
        segment_msg().prop_map(ServerMessage::Segment),
        profile().prop_map(|prefs| ServerMessage::PrefsAck { prefs }),
        ("[a-z_]{1,16}", ".{0,40}").prop_map(|(code, detail)| ServerMessage::Error { code, detail }),
        Just(ServerMessage::Ping),
    ]
}

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        (-1e9f64..1e9).prop_map(|f| json!(f)),
        ".{0,12}".prop_map(Value::from),
    ]
}

fn json_object() -> impl Strategy<Value = Map<String, Value>> {
    proptest::collection::btree_map("[a-z_]{1,10}", json_leaf(), 0..5).prop_map(|m| m.into_iter().collect())
}

pub fn client_message() -> impl Strategy<Value = ClientMessage> {
    prop_oneof![
        (any::<i64>(), proptest::option::of(".{0,30}"), proptest::option::of(json_object()))
            .prop_map(|(v, resume, prefs)| ClientMessage::Hello { v, resume, prefs }),
        json_object().prop_map(|patch| ClientMessage::Prefs { patch }),
        Just(ClientMessage::Pong),
    ]
}
