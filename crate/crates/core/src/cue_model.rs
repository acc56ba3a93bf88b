//! Shared caption vocabulary: tokens, cues, segments, annotations and the
//! bracketed tag grammar (`[concerned]`, `[shrug gesture]`, ...).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the session epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }

    pub fn saturating_sub(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_sub(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueKind {
    Tone,
    Gesture,
}

impl CueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CueKind::Tone => "tone",
            CueKind::Gesture => "gesture",
        }
    }
}

impl fmt::Display for CueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CueKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tone" => Ok(CueKind::Tone),
            "gesture" => Ok(CueKind::Gesture),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ToneLabel {
    Neutral,
    Excited,
    Concerned,
    Confused,
    Urgent,
    Sarcastic,
    Calm,
}

impl ToneLabel {
    pub const ALL: [ToneLabel; 7] = [
        ToneLabel::Neutral,
        ToneLabel::Excited,
        ToneLabel::Concerned,
        ToneLabel::Confused,
        ToneLabel::Urgent,
        ToneLabel::Sarcastic,
        ToneLabel::Calm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToneLabel::Neutral => "neutral",
            ToneLabel::Excited => "excited",
            ToneLabel::Concerned => "concerned",
            ToneLabel::Confused => "confused",
            ToneLabel::Urgent => "urgent",
            ToneLabel::Sarcastic => "sarcastic",
            ToneLabel::Calm => "calm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureLabel {
    Nods,
    Shrugs,
    Pointing,
    HeadShake,
    HandRaise,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 5] = [
        GestureLabel::Nods,
        GestureLabel::Shrugs,
        GestureLabel::Pointing,
        GestureLabel::HeadShake,
        GestureLabel::HandRaise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Nods => "nods",
            GestureLabel::Shrugs => "shrugs",
            GestureLabel::Pointing => "pointing",
            GestureLabel::HeadShake => "head-shake",
            GestureLabel::HandRaise => "hand-raise",
        }
    }

    /// Short surface form used by minimal tags (`[points]`).
    pub fn minimal_surface(self) -> &'static str {
        match self {
            GestureLabel::Nods => "nods",
            GestureLabel::Shrugs => "shrugs",
            GestureLabel::Pointing => "points",
            GestureLabel::HeadShake => "shakes head",
            GestureLabel::HandRaise => "raises hand",
        }
    }

    /// Base noun used by verbose tags (`[shrug gesture]`).
    pub fn verbose_noun(self) -> &'static str {
        match self {
            GestureLabel::Nods => "nod",
            GestureLabel::Shrugs => "shrug",
            GestureLabel::Pointing => "pointing",
            GestureLabel::HeadShake => "head-shake",
            GestureLabel::HandRaise => "hand-raise",
        }
    }
}

/// A member of one of the two closed cue vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CueLabel {
    Tone(ToneLabel),
    Gesture(GestureLabel),
}

impl CueLabel {
    pub fn kind(self) -> CueKind {
        match self {
            CueLabel::Tone(_) => CueKind::Tone,
            CueLabel::Gesture(_) => CueKind::Gesture,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CueLabel::Tone(t) => t.name(),
            CueLabel::Gesture(g) => g.name(),
        }
    }

    pub fn is_neutral(self) -> bool {
        self == CueLabel::Tone(ToneLabel::Neutral)
    }

    /// Every vocabulary member, tones first.
    pub fn all() -> impl Iterator<Item = CueLabel> {
        ToneLabel::ALL
            .into_iter()
            .map(CueLabel::Tone)
            .chain(GestureLabel::ALL.into_iter().map(CueLabel::Gesture))
    }
}

impl fmt::Display for CueLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind(), self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown {kind} label {name:?}")]
    UnknownLabel { kind: CueKind, name: String },
    #[error("unknown cue kind {0:?}")]
    UnknownKind(String),
    #[error("invalid token: {0}")]
    InvalidToken(&'static str),
    #[error("invalid cue: {0}")]
    InvalidCue(&'static str),
}

/// Resolves `name` (case-insensitively) against the closed vocabulary for `kind`.
pub fn validate_label(kind: CueKind, name: &str) -> Result<CueLabel, ModelError> {
    let lower = name.to_ascii_lowercase();
    let found = match kind {
        CueKind::Tone => ToneLabel::ALL
            .into_iter()
            .find(|t| t.name() == lower)
            .map(CueLabel::Tone),
        CueKind::Gesture => GestureLabel::ALL
            .into_iter()
            .find(|g| g.name() == lower)
            .map(CueLabel::Gesture),
    };
    found.ok_or_else(|| ModelError::UnknownLabel {
        kind,
        name: name.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Partial,
    Final,
}

/// One ASR word or phrase hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptToken {
    pub source_seq: u64,
    pub text: String,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub speaker_id: String,
    pub stability: Stability,
    pub confidence: f64,
}

impl TranscriptToken {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.source_seq == 0 {
            return Err(ModelError::InvalidToken("seq must be positive"));
        }
        if self.text.is_empty() {
            return Err(ModelError::InvalidToken("empty text"));
        }
        if self.text.contains(['\n', '\r']) {
            return Err(ModelError::InvalidToken("embedded newline"));
        }
        if self.text.trim() != self.text {
            return Err(ModelError::InvalidToken("surrounding whitespace"));
        }
        if self.t_start > self.t_end {
            return Err(ModelError::InvalidToken("t_start after t_end"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ModelError::InvalidToken("confidence outside [0,1]"));
        }
        Ok(())
    }

    pub fn is_final(&self) -> bool {
        self.stability == Stability::Final
    }

    /// Strict span overlap; touching spans do not overlap.
    pub fn overlaps(&self, other: &TranscriptToken) -> bool {
        self.t_start < other.t_end && other.t_start < self.t_end
    }
}

/// One detected non-verbal signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CueEvent {
    pub source_seq: u64,
    pub label: CueLabel,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub confidence: f64,
    pub source_id: String,
}

impl CueEvent {
    pub fn kind(&self) -> CueKind {
        self.label.kind()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.source_seq == 0 {
            return Err(ModelError::InvalidCue("seq must be positive"));
        }
        if self.t_start > self.t_end {
            return Err(ModelError::InvalidCue("t_start after t_end"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ModelError::InvalidCue("confidence outside [0,1]"));
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        self.t_end.0 - self.t_start.0
    }

    /// Twice the midpoint, so midpoints stay integral.
    pub fn midpoint_x2(&self) -> u64 {
        self.t_start.0 + self.t_end.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Off,
    #[default]
    Minimal,
    Verbose,
}

impl Verbosity {
    pub fn as_str(self) -> &'static str {
        match self {
            Verbosity::Off => "off",
            Verbosity::Minimal => "minimal",
            Verbosity::Verbose => "verbose",
        }
    }
}

/// A tone or gesture tag bound to a position inside a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub category: CueKind,
    pub label: CueLabel,
    pub anchor: usize,
    pub confidence: f64,
    pub origin: Vec<u64>,
}

impl Annotation {
    pub fn tone(label: ToneLabel, confidence: f64, origin: Vec<u64>) -> Self {
        Annotation {
            category: CueKind::Tone,
            label: CueLabel::Tone(label),
            anchor: 0,
            confidence,
            origin,
        }
    }

    pub fn gesture(label: GestureLabel, anchor: usize, confidence: f64, origin: Vec<u64>) -> Self {
        Annotation {
            category: CueKind::Gesture,
            label: CueLabel::Gesture(label),
            anchor,
            confidence,
            origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(String);

impl SegmentId {
    pub fn from_counter(n: u64) -> Self {
        SegmentId(format!("seg-{n:06}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Numeric part of a well-formed id.
    pub fn counter(&self) -> Option<u64> {
        self.0.strip_prefix("seg-")?.parse().ok()
    }
}

impl FromStr for SegmentId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("seg-") {
            Some(digits) if digits.len() >= 6 && digits.bytes().all(|b| b.is_ascii_digit()) => {
                Ok(SegmentId(s.to_string()))
            }
            _ => Err(ModelError::InvalidToken("segment id must be seg-NNNNNN")),
        }
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentState {
    Open,
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionSegment {
    pub segment_id: SegmentId,
    pub tokens: Vec<TranscriptToken>,
    pub annotations: Vec<Annotation>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub state: SegmentState,
    pub revision: u32,
}

impl CaptionSegment {
    pub fn new(segment_id: SegmentId, first: TranscriptToken) -> Self {
        let (t_start, t_end) = (first.t_start, first.t_end);
        CaptionSegment {
            segment_id,
            tokens: vec![first],
            annotations: Vec::new(),
            t_start,
            t_end,
            state: SegmentState::Open,
            revision: 0,
        }
    }

    pub fn push_token(&mut self, token: TranscriptToken) {
        self.t_end = self.t_end.max(token.t_end);
        self.tokens.push(token);
        self.recompute_span();
    }

    pub fn recompute_span(&mut self) {
        if let Some(first) = self.tokens.first() {
            self.t_start = first.t_start;
            self.t_end = self.tokens.iter().map(|t| t.t_end).max().unwrap_or(first.t_end);
        }
    }

    pub fn is_final(&self) -> bool {
        self.state == SegmentState::Final
    }

    /// Token texts joined with single spaces, no tags.
    pub fn plain_text(&self) -> String {
        join_words(self.tokens.iter().map(|t| t.text.as_str()))
    }

    pub fn char_count(&self) -> usize {
        plain_char_count(&self.tokens)
    }

    pub fn tone(&self) -> Option<&Annotation> {
        self.annotations.iter().find(|a| a.category == CueKind::Tone)
    }
}

pub(crate) fn plain_char_count(tokens: &[TranscriptToken]) -> usize {
    let chars: usize = tokens.iter().map(|t| t.text.chars().count()).sum();
    chars + tokens.len().saturating_sub(1)
}

fn join_words<'a>(words: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for w in words.filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Which tags to show and how verbosely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub verbosity: Verbosity,
    pub show_tone: bool,
    pub show_gestures: bool,
}

impl RenderOptions {
    /// Verbose, every category: the transcript rendering.
    pub const VERBOSE_ALL: RenderOptions = RenderOptions {
        verbosity: Verbosity::Verbose,
        show_tone: true,
        show_gestures: true,
    };

    fn shows(&self, category: CueKind) -> bool {
        match category {
            CueKind::Tone => self.show_tone,
            CueKind::Gesture => self.show_gestures,
        }
    }
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            verbosity: Verbosity::Minimal,
            show_tone: true,
            show_gestures: true,
        }
    }
}

/// Renders the tag for a bare label; neutral tone and `Off` give "".
pub fn label_tag(label: CueLabel, verbosity: Verbosity) -> String {
    if label.is_neutral() {
        tracing::debug!("neutral tone reached the tag formatter; suppressed");
        return String::new();
    }
    match (verbosity, label) {
        (Verbosity::Off, _) => String::new(),
        (Verbosity::Minimal, CueLabel::Tone(t)) => format!("[{}]", t.name()),
        (Verbosity::Minimal, CueLabel::Gesture(g)) => format!("[{}]", g.minimal_surface()),
        (Verbosity::Verbose, CueLabel::Tone(t)) => format!("[{} tone]", t.name()),
        (Verbosity::Verbose, CueLabel::Gesture(g)) => format!("[{} gesture]", g.verbose_noun()),
    }
}

pub fn format_tag(annotation: &Annotation, verbosity: Verbosity) -> String {
    label_tag(annotation.label, verbosity)
}

/// Category and label recovered from a rendered tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagSkeleton {
    pub category: CueKind,
    pub label: CueLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("not a bracketed tag: {0:?}")]
    NotATag(String),
    #[error("unknown tag surface: {0:?}")]
    UnknownSurface(String),
}

/// Inverse of [`format_tag`] for both minimal and verbose forms.
pub fn parse_tag(text: &str) -> Result<TagSkeleton, TagError> {
    let inner = text
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| TagError::NotATag(text.to_string()))?;
    let unknown = || TagError::UnknownSurface(text.to_string());
    let skeleton = |label: CueLabel| TagSkeleton {
        category: label.kind(),
        label,
    };

    if let Some(name) = inner.strip_suffix(" tone") {
        return ToneLabel::ALL
            .into_iter()
            .filter(|t| *t != ToneLabel::Neutral)
            .find(|t| t.name() == name)
            .map(|t| skeleton(CueLabel::Tone(t)))
            .ok_or_else(unknown);
    }
    if let Some(noun) = inner.strip_suffix(" gesture") {
        return GestureLabel::ALL
            .into_iter()
            .find(|g| g.verbose_noun() == noun)
            .map(|g| skeleton(CueLabel::Gesture(g)))
            .ok_or_else(unknown);
    }
    if let Some(t) = ToneLabel::ALL
        .into_iter()
        .filter(|t| *t != ToneLabel::Neutral)
        .find(|t| t.name() == inner)
    {
        return Ok(skeleton(CueLabel::Tone(t)));
    }
    GestureLabel::ALL
        .into_iter()
        .find(|g| g.minimal_surface() == inner)
        .map(|g| skeleton(CueLabel::Gesture(g)))
        .ok_or_else(unknown)
}

/// Joins token texts with single spaces and splices in visible tags: the tone
/// tag leads token 0, each gesture tag follows the token at its anchor.
pub fn render_segment_text(segment: &CaptionSegment, options: &RenderOptions) -> String {
    let tag_for = |a: &Annotation| -> String {
        if options.shows(a.category) {
            format_tag(a, options.verbosity)
        } else {
            String::new()
        }
    };

    let mut pieces: Vec<String> = Vec::with_capacity(segment.tokens.len() + segment.annotations.len());
    if let Some(tone) = segment.tone() {
        pieces.push(tag_for(tone));
    }
    for (idx, token) in segment.tokens.iter().enumerate() {
        pieces.push(token.text.clone());
        pieces.extend(
            segment
                .annotations
                .iter()
                .filter(|a| a.category == CueKind::Gesture && a.anchor == idx)
                .map(tag_for),
        );
    }
    join_words(pieces.iter().map(String::as_str))
}
