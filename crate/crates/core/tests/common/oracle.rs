//! Offline reference: sort everything, segment in one pass, attach cues per
//! segment. Shares only the data types and the tag renderer with the
//! streaming engine.

use std::collections::{HashMap, HashSet};

use capfuse_core::cue_model::{
    render_segment_text, Annotation, CaptionSegment, CueEvent, CueLabel, RenderOptions, SegmentId, SegmentState,
    Stability, TranscriptToken,
};
use capfuse_core::fusion::FusionConfig;
use capfuse_core::ingest::{IngestEvent, Payload};

fn overlaps(a: &TranscriptToken, b: &TranscriptToken) -> bool {
    a.t_start < b.t_end && b.t_start < a.t_end
}

fn priority(ev: &IngestEvent) -> u8 {
    ev.source.fused_index().expect("fused source") as u8
}

/// Tokens that survive supersession, in time order.
fn surviving_tokens(events: &[IngestEvent]) -> Vec<TranscriptToken> {
    let mut arrived: Vec<&TranscriptToken> = events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Token(t) => Some(t),
            _ => None,
        })
        .collect();
    arrived.sort_by_key(|t| t.source_seq);
    let mut kept: Vec<TranscriptToken> = Vec::new();
    for t in arrived {
        kept.retain(|k| k.stability == Stability::Final || !overlaps(k, t));
        kept.push(t.clone());
    }
    kept.sort_by_key(|t| (t.t_start, t.source_seq));
    kept
}

fn ends_sentence(t: &TranscriptToken) -> bool {
    t.stability == Stability::Final && matches!(t.text.chars().last(), Some('.' | '?' | '!'))
}

fn segments(tokens: Vec<TranscriptToken>, cfg: &FusionConfig) -> Vec<Vec<TranscriptToken>> {
    let mut out: Vec<Vec<TranscriptToken>> = Vec::new();
    for t in tokens {
        let close = match out.last() {
            None => true,
            Some(seg) => {
                let last = seg.last().unwrap();
                let gap = t.t_start.0 as i64 - last.t_end.0 as i64;
                let words: usize = seg.iter().map(|x| x.text.chars().count()).sum::<usize>() + seg.len() - 1;
                let too_long = t.stability == Stability::Final
                    && (seg.len() + 1 > cfg.max_tokens || words + 1 + t.text.chars().count() > cfg.max_chars);
                gap >= cfg.gap_ms as i64 || ends_sentence(last) || too_long
            }
        };
        if close {
            out.push(vec![t]);
        } else {
            out.last_mut().unwrap().push(t);
        }
    }
    out
}

/// Final segments the streaming engine must reproduce, as transcript lines.
pub fn batch_lines(events: &[IngestEvent], cfg: &FusionConfig) -> Vec<String> {
    batch_segments(events, cfg)
        .iter()
        .map(|s| {
            format!(
                "{}..{}|{}",
                s.t_start,
                s.t_end,
                render_segment_text(s, &RenderOptions::VERBOSE_ALL)
            )
        })
        .collect()
}

pub fn batch_segments(events: &[IngestEvent], cfg: &FusionConfig) -> Vec<CaptionSegment> {
    let mut sorted: Vec<&IngestEvent> = events.iter().collect();
    sorted.sort_by_key(|e| (e.start(), priority(e), e.seq().unwrap_or(0)));
    let cues: Vec<&CueEvent> = sorted
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Cue(c) => Some(c),
            _ => None,
        })
        .collect();

    let mut used: HashSet<(bool, u64)> = HashSet::new();
    let key = |c: &CueEvent| (matches!(c.label, CueLabel::Tone(_)), c.source_seq);
    let mut last_tone: Option<(CueLabel, u64)> = None;
    let mut last_gesture: HashMap<CueLabel, u64> = HashMap::new();
    let mut result = Vec::new();

    for (n, mut toks) in segments(surviving_tokens(events), cfg).into_iter().enumerate() {
        for t in &mut toks {
            t.stability = Stability::Final;
        }
        let s0 = toks[0].t_start.0;
        let s1 = toks.iter().map(|t| t.t_end.0).max().unwrap();
        let mut seg = CaptionSegment::new(SegmentId::from_counter(n as u64 + 1), toks[0].clone());
        for t in &toks[1..] {
            seg.push_token(t.clone());
        }
        seg.state = SegmentState::Final;

        // tone: best qualifying candidate
        let mut best: Option<&CueEvent> = None;
        for c in cues.iter().copied() {
            let CueLabel::Tone(tone) = c.label else { continue };
            if used.contains(&key(c)) || tone.name() == "neutral" || c.confidence < cfg.tone_conf_min {
                continue;
            }
            let (c0, c1) = (c.t_start.0, c.t_end.0);
            let dur = c1 - c0;
            let ok = if dur < cfg.overlap_min_ms {
                s0 <= c0 && c1 <= s1
            } else {
                let ov = c1.min(s1).saturating_sub(c0.max(s0)) as f64;
                ov >= (cfg.overlap_min_frac * dur as f64).max(cfg.overlap_min_ms as f64)
            };
            if !ok {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    c.confidence > b.confidence
                        || (c.confidence == b.confidence
                            && (c0 < b.t_start.0 || (c0 == b.t_start.0 && c.label.name() < b.label.name())))
                }
            };
            if better {
                best = Some(c);
            }
        }
        if let Some(c) = best {
            used.insert(key(c));
            let suppressed = matches!(last_tone, Some((l, end)) if l == c.label && (s0 as i64 - end as i64) < cfg.tone_repeat_suppress_ms as i64);
            if !suppressed {
                let CueLabel::Tone(t) = c.label else { unreachable!() };
                seg.annotations.push(Annotation::tone(t, c.confidence, vec![c.source_seq]));
                last_tone = Some((c.label, s1));
            }
        }

        // gestures: midpoint inside, time order
        for c in cues.iter().copied() {
            let CueLabel::Gesture(g) = c.label else { continue };
            let mid2 = c.t_start.0 + c.t_end.0;
            if used.contains(&key(c)) || mid2 < 2 * s0 || mid2 > 2 * s1 {
                continue;
            }
            used.insert(key(c));
            if let Some(prev) = last_gesture.get(&c.label) {
                if prev.abs_diff(mid2) < 2 * cfg.gesture_dedup_ms {
                    continue;
                }
            }
            let mut anchor = 0;
            let mut best_d = u64::MAX;
            for (i, t) in seg.tokens.iter().enumerate() {
                let d = (t.t_start.0 + t.t_end.0).abs_diff(mid2);
                if d < best_d {
                    best_d = d;
                    anchor = i;
                }
            }
            seg.annotations.push(Annotation::gesture(g, anchor, c.confidence, vec![c.source_seq]));
            last_gesture.insert(c.label, mid2);
        }
        result.push(seg);
    }
    result
}
