mod common;

use capfuse_core::fusion::FusionConfig;
use capfuse_core::ingest::replay::terminal_watermarks;
use capfuse_core::ingest::IngestEvent;
use capfuse_core::synth::to_ndjson;
use capfuse_core::{replay_str, ProsodyFrame, Timestamp};
use common::closure::{live_run, noisy_lines};
use common::random_session;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn replaying_a_recording_reproduces_the_live_transcript() {
    for seed in 0..25 {
        let lines = noisy_lines(seed);
        let live = live_run(&lines);
        assert!(live.rejected > 0, "seed {seed} exercised no rejections");
        let replayed = replay_str(&live.recording, FusionConfig::default()).unwrap();
        assert_eq!(replayed.transcript, live.transcript, "seed {seed}");
        assert_eq!(replayed.report.events_rejected.by_reason.values().sum::<u64>(), 0, "seed {seed}");
        replayed.report.check_invariants().unwrap();
    }
}

#[test]
fn recording_a_replay_is_a_fixed_point() {
    let lines = noisy_lines(99);
    let first = live_run(&lines).recording;
    let again: Vec<String> = first.lines().map(str::to_string).collect();
    let second = live_run(&again);
    assert_eq!(second.rejected, 0);
    let strip_tail = |s: &str| s.lines().filter(|l| !l.contains("watermark")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip_tail(&second.recording), strip_tail(&first));
}

#[test]
fn recording_is_the_accepted_subsequence() {
    let lines = noisy_lines(3);
    let live = live_run(&lines);
    let recorded: Vec<&str> = live.recording.lines().collect();
    let body = &recorded[..recorded.len() - 3];
    let mut it = lines.iter();
    for r in body {
        assert!(it.any(|l| l == r), "{r} out of order or invented");
    }
    assert_eq!(body.len() + live.rejected, lines.len());
}

#[test]
fn prosody_sessions_replay_identically() {
    let (script, _) = random_session(17);
    let mut rng = StdRng::seed_from_u64(17);
    let mut events: Vec<IngestEvent> = script.tokens.iter().cloned().map(IngestEvent::token).collect();
    let end = script.max_t().0;
    let mut frames = Vec::new();
    let mut t = 0;
    while t <= end {
        // rare lively stretches stand out from the session baseline
        let lively = (t / 2000) % 6 == 5;
        frames.push(IngestEvent::frame(ProsodyFrame {
            t: Timestamp(t),
            rms_energy: if lively { rng.random_range(0.7..0.9) } else { rng.random_range(0.1..0.2) },
            f0_mean: rng.random_range(100.0..220.0),
            f0_var: if lively { rng.random_range(600.0..900.0) } else { rng.random_range(10.0..60.0) },
            rate: if lively { rng.random_range(5.0..6.0) } else { rng.random_range(2.0..3.0) },
        }));
        t += 100;
    }
    events.extend(frames);
    events.sort_by_key(|e| e.start());
    events.extend(
        terminal_watermarks(Timestamp(end + 1))
            .into_iter()
            .filter(|e| e.source != capfuse_core::Source::Affect),
    );
    let lines: Vec<String> = to_ndjson(&events).lines().map(str::to_string).collect();
    let live = live_run(&lines);
    assert_eq!(live.rejected, 0);
    assert!(live.transcript.contains(" tone] "), "detector never fired");
    let replayed = replay_str(&live.recording, FusionConfig::default()).unwrap();
    assert_eq!(replayed.transcript, live.transcript);
    assert!(replayed.report.cues_attached > 0);
}
