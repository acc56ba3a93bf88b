//! Scripted session generators for tests, benchmarks and demos.
//!
//! A [`Script`] is the content of a session (tokens and cues per source);
//! [`interleave`] turns it into one valid arrival order with a random
//! watermark schedule, and [`lecture_events`] lays it out on a fixed beat
//! grid the way live sources would deliver it.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::cue_model::{CueEvent, CueLabel, GestureLabel, Stability, Timestamp, ToneLabel, TranscriptToken};
use crate::ingest::codec::{encode_event, IngestEvent, Source};

const WORDS: &[&str] = &[
    "the", "voltage", "here", "is", "critical", "current", "flows", "through", "this", "resistor", "we", "measure",
    "across", "node", "ground", "so", "now", "look", "at", "circuit", "capacitor", "charges", "slowly", "watch",
    "again", "why", "does", "it", "drop", "quickly", "and", "then", "settle",
];
const ENDINGS: &[&str] = &[".", "?", "!"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    /// Transcript tokens in arrival order, partials included.
    pub tokens: Vec<TranscriptToken>,
    pub tones: Vec<CueEvent>,
    pub gestures: Vec<CueEvent>,
}

impl Script {
    pub fn event_count(&self) -> usize {
        self.tokens.len() + self.tones.len() + self.gestures.len()
    }

    /// Latest time mentioned by any token or cue.
    pub fn max_t(&self) -> Timestamp {
        self.tokens
            .iter()
            .map(|t| t.t_end)
            .chain(self.tones.iter().chain(&self.gestures).map(|c| c.t_end))
            .max()
            .unwrap_or_default()
    }

    fn stream(&self, source: Source) -> Vec<IngestEvent> {
        match source {
            Source::Asr => self.tokens.iter().cloned().map(IngestEvent::token).collect(),
            Source::Affect => self.tones.iter().cloned().map(IngestEvent::cue).collect(),
            _ => self.gestures.iter().cloned().map(IngestEvent::cue).collect(),
        }
    }
}

/// Knobs for [`random_script`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptShape {
    /// Final tokens to generate.
    pub words: usize,
    pub tones: usize,
    pub gestures: usize,
    /// Probability a word is preceded by interim hypotheses.
    pub partial_rate: f64,
    /// Probability a word is followed by a pause that closes a segment.
    pub pause_rate: f64,
}

impl ScriptShape {
    /// Random counts in `[lo, hi]` for each of the three sources.
    pub fn random(rng: &mut impl Rng, lo: usize, hi: usize) -> Self {
        ScriptShape {
            words: rng.random_range(lo..=hi),
            tones: rng.random_range(lo..=hi),
            gestures: rng.random_range(lo..=hi),
            partial_rate: 0.2,
            pause_rate: 0.12,
        }
    }
}

fn token(seq: u64, text: String, t0: u64, t1: u64, stability: Stability, rng: &mut impl Rng) -> TranscriptToken {
    TranscriptToken {
        source_seq: seq,
        text,
        t_start: Timestamp(t0),
        t_end: Timestamp(t1),
        speaker_id: "S1".into(),
        stability,
        confidence: (rng.random_range(50..=99) as f64) / 100.0,
    }
}

/// Confidence drawn from a coarse grid so that ties actually happen.
fn grid_conf(rng: &mut impl Rng) -> f64 {
    *[0.4, 0.55, 0.6, 0.7, 0.75, 0.8, 0.9, 0.95]
        .choose(rng)
        .expect("grid is non-empty")
}

/// Builds random session content. Tokens never overlap except where a
/// partial is superseded; some trailing partials are never finalized.
pub fn random_script(rng: &mut impl Rng, shape: ScriptShape) -> Script {
    let mut tokens = Vec::new();
    let mut seq = 0u64;
    let mut t = rng.random_range(0..2_000u64);
    for i in 0..shape.words {
        let dur = rng.random_range(80..=500u64);
        let mut text = WORDS.choose(rng).expect("non-empty").to_string();
        if rng.random_bool(0.12) {
            text.push_str(ENDINGS.choose(rng).expect("non-empty"));
        }
        if i % 37 == 5 {
            text = format!("wörd{i}");
        }
        if rng.random_bool(shape.partial_rate) {
            for _ in 0..rng.random_range(1..=2) {
                seq += 1;
                let cut = rng.random_range(1..=dur);
                let prefix: String = text.chars().take(rng.random_range(1..=text.chars().count())).collect();
                tokens.push(token(seq, prefix, t, t + cut, Stability::Partial, rng));
            }
        }
        seq += 1;
        // Occasionally the recognizer never settles a word.
        let stability = if rng.random_bool(0.03) {
            Stability::Partial
        } else {
            Stability::Final
        };
        tokens.push(token(seq, text, t, t + dur, stability, rng));
        t += dur;
        t += if rng.random_bool(shape.pause_rate) {
            rng.random_range(600..=2_500)
        } else {
            rng.random_range(0..=200)
        };
    }
    let horizon = t + 1_000;

    let mut tones = Vec::with_capacity(shape.tones);
    for _ in 0..shape.tones {
        let t0 = rng.random_range(0..horizon);
        let dur = rng.random_range(100..=3_000u64);
        let label = *ToneLabel::ALL.choose(rng).expect("non-empty");
        tones.push(CueEvent {
            source_seq: 0,
            label: CueLabel::Tone(label),
            t_start: Timestamp(t0),
            t_end: Timestamp(t0 + dur),
            confidence: grid_conf(rng),
            source_id: "affect".into(),
        });
    }
    let mut gestures = Vec::with_capacity(shape.gestures);
    for _ in 0..shape.gestures {
        let t0 = rng.random_range(0..horizon);
        let dur = rng.random_range(0..=800u64);
        let label = *GestureLabel::ALL.choose(rng).expect("non-empty");
        gestures.push(CueEvent {
            source_seq: 0,
            label: CueLabel::Gesture(label),
            t_start: Timestamp(t0),
            t_end: Timestamp(t0 + dur),
            confidence: grid_conf(rng),
            source_id: "gesture".into(),
        });
    }
    for cues in [&mut tones, &mut gestures] {
        cues.sort_by_key(|c| c.t_start);
        for (i, c) in cues.iter_mut().enumerate() {
            c.source_seq = i as u64 + 1;
        }
    }
    Script { tokens, tones, gestures }
}

/// One arrival order for `script`: sources interleave at random, each
/// keeps its own order, and watermark beats are sprinkled in at random
/// heights that never pass the source's next event. No terminal beats are
/// added.
pub fn interleave(script: &Script, rng: &mut impl Rng) -> Vec<IngestEvent> {
    let streams: Vec<Vec<IngestEvent>> = Source::FUSED.iter().map(|&s| script.stream(s)).collect();
    let mut pos = [0usize; 3];
    let mut wm = [0u64; 3];
    let mut out = Vec::with_capacity(script.event_count() * 2);
    loop {
        let live: Vec<usize> = (0..3).filter(|&i| pos[i] < streams[i].len()).collect();
        let Some(&i) = live.choose(rng) else { break };
        out.push(streams[i][pos[i]].clone());
        pos[i] += 1;
        if rng.random_bool(0.3) {
            let ceiling = streams[i].get(pos[i]).map_or(script.max_t().0, |ev| ev.start().0);
            if ceiling > wm[i] {
                wm[i] = rng.random_range(wm[i]..=ceiling);
                out.push(IngestEvent::watermark(Source::FUSED[i], Timestamp(wm[i])));
            }
        }
    }
    out
}

/// Lays `script` out as live sources would deliver it: every event at its
/// start time, and a watermark from every source each `beat_ms`. Events
/// sharing a timestamp keep asr, affect, gesture order.
pub fn lecture_events(script: &Script, beat_ms: u64) -> Vec<IngestEvent> {
    let mut timed: Vec<(u64, usize, usize, IngestEvent)> = Vec::new();
    for (si, &source) in Source::FUSED.iter().enumerate() {
        for (k, ev) in script.stream(source).into_iter().enumerate() {
            timed.push((ev.start().0, si, k, ev));
        }
    }
    let end = script.max_t().0;
    let mut beat = beat_ms;
    while beat <= end + beat_ms {
        for (si, &source) in Source::FUSED.iter().enumerate() {
            timed.push((beat, si, usize::MAX, IngestEvent::watermark(source, Timestamp(beat))));
        }
        beat += beat_ms;
    }
    // Events at a beat instant go first; the beat still admits them either way.
    timed.sort_by_key(|(t, si, k, _)| (*t, *k == usize::MAX, *si, *k));
    timed.into_iter().map(|(.., ev)| ev).collect()
}

/// Deterministic lecture-like script of roughly `duration_ms`: sentences of
/// final tokens with pauses, scattered tones and gestures.
pub fn lecture_script(rng: &mut impl Rng, duration_ms: u64) -> Script {
    let mut script = Script::default();
    let mut t = 500u64;
    let mut seq = 0;
    while t < duration_ms {
        let words = rng.random_range(4..=14);
        let sentence_start = t;
        for w in 0..words {
            seq += 1;
            let dur = rng.random_range(150..=450);
            let mut text = WORDS.choose(rng).expect("non-empty").to_string();
            if w + 1 == words {
                text.push('.');
            }
            script
                .tokens
                .push(token(seq, text, t, t + dur, Stability::Final, rng));
            t += dur + rng.random_range(30..=150);
        }
        if rng.random_bool(0.5) {
            let label = *ToneLabel::ALL[1..].choose(rng).expect("non-empty");
            script.tones.push(CueEvent {
                source_seq: script.tones.len() as u64 + 1,
                label: CueLabel::Tone(label),
                t_start: Timestamp(sentence_start),
                t_end: Timestamp(t),
                confidence: 0.85,
                source_id: "affect".into(),
            });
        }
        if rng.random_bool(0.6) {
            let at = rng.random_range(sentence_start..t);
            script.gestures.push(CueEvent {
                source_seq: script.gestures.len() as u64 + 1,
                label: CueLabel::Gesture(*GestureLabel::ALL.choose(rng).expect("non-empty")),
                t_start: Timestamp(at),
                t_end: Timestamp(at + 300),
                confidence: 0.9,
                source_id: "gesture".into(),
            });
        }
        t += rng.random_range(800..=1_500);
    }
    script
}

pub fn to_ndjson(events: &[IngestEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&encode_event(ev));
        out.push('\n');
    }
    out
}
