//! Streaming output against the batch oracle, and properties of the final
//! output over random sessions.

mod common;

use capfuse_core::cue_model::{CueKind, CueLabel};
use capfuse_core::fusion::FusionConfig;
use common::{lines, oracle, random_session, reinterleave, stream_finals};
use proptest::prelude::*;

#[test]
fn streaming_matches_batch_on_seeded_sessions() {
    let cfg = FusionConfig::default();
    for seed in 0..40 {
        let (_, events) = random_session(seed);
        let streamed = lines(&stream_finals(&events, &cfg));
        let batch = oracle::batch_lines(&events, &cfg);
        assert_eq!(streamed, batch, "seed {seed}");
    }
}

#[test]
fn arrival_order_does_not_change_output() {
    let cfg = FusionConfig::default();
    for seed in 100..115 {
        let (script, events) = random_session(seed);
        let reference = lines(&stream_finals(&events, &cfg));
        for k in 0..3 {
            let other = reinterleave(&script, seed * 31 + k);
            assert_eq!(lines(&stream_finals(&other, &cfg)), reference, "seed {seed} order {k}");
        }
    }
}

#[test]
fn non_default_config_still_matches() {
    let cfg = FusionConfig {
        gap_ms: 400,
        max_tokens: 5,
        max_chars: 30,
        grace_ms: 100,
        tone_conf_min: 0.5,
        overlap_min_frac: 0.3,
        overlap_min_ms: 150,
        tone_repeat_suppress_ms: 2_000,
        gesture_dedup_ms: 400,
    };
    for seed in 200..215 {
        let (_, events) = random_session(seed);
        assert_eq!(
            lines(&stream_finals(&events, &cfg)),
            oracle::batch_lines(&events, &cfg),
            "seed {seed}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn final_output_invariants(seed in any::<u64>()) {
        let cfg = FusionConfig::default();
        let (_, events) = random_session(seed);
        let finals = stream_finals(&events, &cfg);
        let mut last_tone: Option<(CueLabel, u64)> = None;
        for (i, seg) in finals.iter().enumerate() {
            prop_assert!(!seg.tokens.is_empty());
            prop_assert!(seg.tokens.iter().all(|t| t.is_final()));
            prop_assert!(seg.tokens.windows(2).all(|w| w[0].t_end <= w[1].t_start));
            if i > 0 {
                prop_assert!(finals[i - 1].t_end <= seg.t_start);
            }
            let tones: Vec<_> = seg.annotations.iter().filter(|a| a.category == CueKind::Tone).collect();
            prop_assert!(tones.len() <= 1);
            if let Some(t) = tones.first() {
                if let Some((label, end)) = last_tone {
                    prop_assert!(!(label == t.label && seg.t_start.0 < end + cfg.tone_repeat_suppress_ms));
                }
                last_tone = Some((t.label, seg.t_end.0));
            }
            prop_assert!(seg.annotations.iter().all(|a| a.anchor < seg.tokens.len()));
        }
    }
}
