//! Live-run-with-recorder harness shared by closure tests.

use std::sync::Arc;

use capfuse_core::fusion::FusionConfig;
use capfuse_core::ingest::replay::terminal_watermarks;
use capfuse_core::ingest::{decode_event, encode_event};
use capfuse_core::{Intake, Metrics, Pipeline, Recorder, Timestamp};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::random_session;

/// Lines a flaky source might also send: all rejected at intake.
fn noise(rng: &mut StdRng, previous: &str) -> String {
    match rng.random_range(0..4) {
        0 => "{\"v\":1,\"src\":\"asr\"".to_string(),
        1 => previous.replacen("\"v\":1", "\"v\":7", 1),
        2 => previous.to_string(),
        _ => r#"{"v":1,"src":"gesture","type":"cue","seq":1,"t0":0,"t1":1,"kind":"gesture","label":"waves","conf":0.5}"#
            .to_string(),
    }
}

pub struct Live {
    pub transcript: String,
    pub recording: String,
    pub rejected: usize,
}

/// Runs `lines` through a live pipeline while recording what it accepts,
/// then ends the session the way the server does.
pub fn live_run(lines: &[String]) -> Live {
    let mut pipeline = Pipeline::new(FusionConfig::default(), Arc::new(Metrics::new()));
    let mut recorder = Recorder::new(Vec::new());
    let mut max_t = Timestamp::ZERO;
    let mut rejected = 0;
    for (i, line) in lines.iter().enumerate() {
        let now = Timestamp(i as u64);
        match pipeline.offer_line(line.as_bytes(), now).0 {
            Intake::Accepted => {
                let ev = decode_event(line.as_bytes()).unwrap();
                max_t = max_t.max(ev.end());
                recorder.record(line, &ev).unwrap();
            }
            _ => rejected += 1,
        }
    }
    let end = Timestamp(lines.len() as u64);
    for ev in terminal_watermarks(Timestamp(max_t.0 + 1)) {
        pipeline.inject(ev, end);
    }
    pipeline.finish(end);
    Live {
        transcript: pipeline.transcript(),
        recording: String::from_utf8(recorder.close().unwrap()).unwrap(),
        rejected,
    }
}

pub fn noisy_lines(seed: u64) -> Vec<String> {
    let (_, events) = random_session(seed);
    let mut rng = StdRng::seed_from_u64(seed ^ 0xfeed);
    let mut out: Vec<String> = Vec::new();
    for ev in &events {
        if let Some(prev) = out.last() {
            if rng.random_bool(0.05) {
                let n = noise(&mut rng, &prev.clone());
                out.push(n);
            }
        }
        out.push(encode_event(ev));
    }
    out
}

