//! Stall policy: a source silent for longer than the stall window has its
//! watermark pushed to `now - stall` so captions keep flowing.

use crate::cue_model::Timestamp;

use super::codec::Source;

pub const STALL_MS: u64 = 2_000;

#[derive(Debug, Clone)]
pub struct LivenessPolicy {
    stall_ms: u64,
    last_beat: [Timestamp; 3],
}

impl LivenessPolicy {
    pub fn new(session_start: Timestamp) -> Self {
        Self::with_stall(session_start, STALL_MS)
    }

    pub fn with_stall(session_start: Timestamp, stall_ms: u64) -> Self {
        LivenessPolicy {
            stall_ms,
            last_beat: [session_start; 3],
        }
    }

    pub fn observe_beat(&mut self, source: Source, now: Timestamp) {
        if let Some(i) = source.fused_index() {
            self.last_beat[i] = self.last_beat[i].max(now);
        }
    }

    /// Forced watermark advances for stalled sources, given their current
    /// watermarks (indexed like [`Source::FUSED`]).
    pub fn stalled(&self, now: Timestamp, watermarks: [Timestamp; 3]) -> Vec<(Source, Timestamp)> {
        let floor = now.saturating_sub(self.stall_ms);
        Source::FUSED
            .into_iter()
            .enumerate()
            .filter(|&(i, _)| now.0 >= self.last_beat[i].0 + self.stall_ms && floor > watermarks[i])
            .map(|(_, s)| (s, floor))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advances_only_stalled_sources() {
        let mut p = LivenessPolicy::new(Timestamp(0));
        p.observe_beat(Source::Asr, Timestamp(2500));
        p.observe_beat(Source::Affect, Timestamp(2500));
        let wms = [Timestamp(2400), Timestamp(2400), Timestamp(0)];
        assert_eq!(p.stalled(Timestamp(3000), wms), vec![(Source::Gesture, Timestamp(1000))]);
        assert!(p.stalled(Timestamp(1500), wms).is_empty());
    }

    #[test]
    fn never_regresses_a_watermark() {
        let p = LivenessPolicy::new(Timestamp(0));
        let wms = [Timestamp(5000); 3];
        assert!(p.stalled(Timestamp(6000), wms).is_empty());
    }
}
