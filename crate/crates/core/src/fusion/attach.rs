//! Binding tone and gesture cues to a closing segment.

use std::collections::HashMap;

use crate::cue_model::{Annotation, CaptionSegment, CueEvent, CueLabel, GestureLabel, Timestamp, ToneLabel};

use super::config::FusionConfig;

/// Cues received but not yet attached or discarded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PendingCues {
    pub tones: Vec<CueEvent>,
    pub gestures: Vec<CueEvent>,
}

impl PendingCues {
    pub fn len(&self) -> usize {
        self.tones.len() + self.gestures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, cue: CueEvent) {
        match cue.label {
            CueLabel::Tone(_) => self.tones.push(cue),
            CueLabel::Gesture(_) => self.gestures.push(cue),
        }
    }

    /// Drops cues ending before `bound`; returns how many.
    pub fn expire_before(&mut self, bound: Timestamp) -> usize {
        let before = self.len();
        self.tones.retain(|c| c.t_end >= bound);
        self.gestures.retain(|c| c.t_end >= bound);
        before - self.len()
    }

    pub fn clear(&mut self) -> usize {
        let n = self.len();
        self.tones.clear();
        self.gestures.clear();
        n
    }
}

/// Cross-segment memory for tag suppression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hysteresis {
    /// Last tone actually attached, with the end of its segment.
    pub last_tone_emitted: Option<(ToneLabel, Timestamp)>,
    /// Doubled midpoint of the last attached gesture per label.
    pub last_gesture_mid_x2: HashMap<GestureLabel, u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttachReport {
    pub annotations: Vec<Annotation>,
    pub attached: usize,
    /// Consumed without attaching (suppressed or deduplicated).
    pub suppressed: usize,
}

/// Overlap test for tone cues. Cues shorter than `overlap_min_ms` must lie
/// inside the segment; longer ones need
/// `overlap >= max(overlap_min_frac * duration, overlap_min_ms)`.
pub fn tone_qualifies(cue: &CueEvent, seg_start: Timestamp, seg_end: Timestamp, config: &FusionConfig) -> bool {
    let duration = cue.duration_ms();
    if duration < config.overlap_min_ms {
        return seg_start <= cue.t_start && cue.t_end <= seg_end;
    }
    let overlap = cue.t_end.min(seg_end).0.saturating_sub(cue.t_start.max(seg_start).0);
    overlap as f64 >= (config.overlap_min_frac * duration as f64).max(config.overlap_min_ms as f64)
}

/// Highest confidence wins; then earlier start; then smaller label name.
fn tone_precedes(a: &CueEvent, b: &CueEvent) -> bool {
    a.confidence
        .total_cmp(&b.confidence)
        .reverse()
        .then(a.t_start.cmp(&b.t_start))
        .then(a.label.name().cmp(b.label.name()))
        .then(a.source_seq.cmp(&b.source_seq))
        .is_lt()
}

/// Token whose midpoint is nearest `mid_x2`; ties go to the earlier token.
fn nearest_token(segment: &CaptionSegment, mid_x2: u64) -> usize {
    segment
        .tokens
        .iter()
        .enumerate()
        .min_by_key(|(i, t)| ((t.t_start.0 + t.t_end.0).abs_diff(mid_x2), *i))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Picks at most one tone and any number of gestures for `segment`,
/// removing every consumed cue from `pending`.
pub fn attach_cues(
    segment: &CaptionSegment,
    pending: &mut PendingCues,
    hysteresis: &mut Hysteresis,
    config: &FusionConfig,
) -> AttachReport {
    let mut report = AttachReport::default();
    let (s0, s1) = (segment.t_start, segment.t_end);

    let winner = pending
        .tones
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.label.is_neutral() && c.confidence >= config.tone_conf_min)
        .filter(|(_, c)| tone_qualifies(c, s0, s1, config))
        .reduce(|best, cand| if tone_precedes(cand.1, best.1) { cand } else { best })
        .map(|(i, _)| i);

    if let Some(i) = winner {
        let cue = pending.tones.remove(i);
        let CueLabel::Tone(label) = cue.label else {
            unreachable!("tone list holds tones")
        };
        let repeated = matches!(
            hysteresis.last_tone_emitted,
            Some((prev, prev_end)) if prev == label
                && (s0.0 as i64 - prev_end.0 as i64) < config.tone_repeat_suppress_ms as i64
        );
        if repeated {
            report.suppressed += 1;
        } else {
            report
                .annotations
                .push(Annotation::tone(label, cue.confidence, vec![cue.source_seq]));
            hysteresis.last_tone_emitted = Some((label, s1));
            report.attached += 1;
        }
    }

    let mut order: Vec<usize> = (0..pending.gestures.len())
        .filter(|&i| {
            let mid = pending.gestures[i].midpoint_x2();
            2 * s0.0 <= mid && mid <= 2 * s1.0
        })
        .collect();
    order.sort_by_key(|&i| (pending.gestures[i].t_start, pending.gestures[i].source_seq));

    let mut consumed = Vec::with_capacity(order.len());
    for i in order {
        let cue = &pending.gestures[i];
        let CueLabel::Gesture(label) = cue.label else {
            unreachable!("gesture list holds gestures")
        };
        let mid = cue.midpoint_x2();
        consumed.push(i);
        let duplicate = hysteresis
            .last_gesture_mid_x2
            .get(&label)
            .is_some_and(|&prev| prev.abs_diff(mid) < 2 * config.gesture_dedup_ms);
        if duplicate {
            report.suppressed += 1;
            continue;
        }
        let anchor = nearest_token(segment, mid);
        report
            .annotations
            .push(Annotation::gesture(label, anchor, cue.confidence, vec![cue.source_seq]));
        hysteresis.last_gesture_mid_x2.insert(label, mid);
        report.attached += 1;
    }
    consumed.sort_unstable_by(|a, b| b.cmp(a));
    for i in consumed {
        pending.gestures.remove(i);
    }

    report
}
