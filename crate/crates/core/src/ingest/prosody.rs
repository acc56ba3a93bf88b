//! Toy prosody tone detector.
//!
//! Frames arrive on a fixed 100 ms hop. Running per-feature mean and standard
//! deviation (Welford) give z-scores for the mean of each 10-frame window,
//! and a first-match rule table maps the z-scores to a tone:
//!
//! | rule | condition                               | tone      |
//! |------|-----------------------------------------|-----------|
//! | 1    | z_energy > 1 and z_f0var > 1            | excited   |
//! | 2    | z_energy > 1 and z_rate > 1             | urgent    |
//! | 3    | z_energy < -1 and z_rate < -0.5         | calm      |
//! | 4    | z_f0var > 1.5 and z_energy <= 1         | concerned |
//!
//! Anything else is neutral and produces no cue. Confidence is
//! `min(1, max|z| / 3)`. Rule order is part of the contract.

use std::collections::VecDeque;

use num_traits::Float;

use crate::cue_model::{CueEvent, CueLabel, Timestamp, ToneLabel};

pub const FRAME_HOP_MS: u64 = 100;
pub const WINDOW_FRAMES: usize = 10;
pub const BASELINE_MS: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsodyFrame<F> {
    pub t: Timestamp,
    /// Normalized RMS energy in `[0, 1]`.
    pub rms_energy: F,
    /// Mean fundamental frequency in Hz, 0 when unvoiced.
    pub f0_mean: F,
    /// F0 variance in Hz².
    pub f0_var: F,
    /// Syllables per second.
    pub rate: F,
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningStats<F> {
    count: u64,
    mean: F,
    m2: F,
}

impl<F: Float> Default for RunningStats<F> {
    fn default() -> Self {
        RunningStats {
            count: 0,
            mean: F::zero(),
            m2: F::zero(),
        }
    }
}

impl<F: Float> RunningStats<F> {
    pub fn push(&mut self, x: F) {
        self.count += 1;
        let n = F::from(self.count).expect("count fits the scalar type");
        let delta = x - self.mean;
        self.mean = self.mean + delta / n;
        self.m2 = self.m2 + delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> F {
        self.mean
    }

    /// Population variance.
    pub fn variance(&self) -> F {
        if self.count == 0 {
            F::zero()
        } else {
            self.m2 / F::from(self.count).expect("count fits the scalar type")
        }
    }

    pub fn std_dev(&self) -> F {
        self.variance().sqrt()
    }

    /// Standard score of `x`; zero while the spread is still zero.
    pub fn z(&self, x: F) -> F {
        let sd = self.std_dev();
        if sd > F::zero() {
            (x - self.mean) / sd
        } else {
            F::zero()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats<F: Float> {
    pub energy: RunningStats<F>,
    pub f0_mean: RunningStats<F>,
    pub f0_var: RunningStats<F>,
    pub rate: RunningStats<F>,
}

impl<F: Float> Default for FeatureStats<F> {
    fn default() -> Self {
        FeatureStats {
            energy: RunningStats::default(),
            f0_mean: RunningStats::default(),
            f0_var: RunningStats::default(),
            rate: RunningStats::default(),
        }
    }
}

impl<F: Float> FeatureStats<F> {
    pub fn push(&mut self, frame: &ProsodyFrame<F>) {
        self.energy.push(frame.rms_energy);
        self.f0_mean.push(frame.f0_mean);
        self.f0_var.push(frame.f0_var);
        self.rate.push(frame.rate);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScores<F> {
    pub energy: F,
    pub f0_mean: F,
    pub f0_var: F,
    pub rate: F,
}

impl<F: Float> ZScores<F> {
    pub fn zero() -> Self {
        ZScores {
            energy: F::zero(),
            f0_mean: F::zero(),
            f0_var: F::zero(),
            rate: F::zero(),
        }
    }

    pub fn max_abs(&self) -> F {
        [self.energy, self.f0_mean, self.f0_var, self.rate]
            .into_iter()
            .map(Float::abs)
            .fold(F::zero(), Float::max)
    }
}

/// Rule thresholds. Defaults are the fixed table in the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneThresholds<F> {
    pub high_energy: F,
    pub high_f0_var: F,
    pub high_rate: F,
    pub low_energy: F,
    pub low_rate: F,
    pub concerned_f0_var: F,
    /// max|z| that maps to confidence 1.
    pub confidence_scale: F,
}

impl<F: Float> Default for ToneThresholds<F> {
    fn default() -> Self {
        let c = |x: f64| F::from(x).expect("threshold fits the scalar type");
        ToneThresholds {
            high_energy: c(1.0),
            high_f0_var: c(1.0),
            high_rate: c(1.0),
            low_energy: c(-1.0),
            low_rate: c(-0.5),
            concerned_f0_var: c(1.5),
            confidence_scale: c(3.0),
        }
    }
}

/// First-match rule table over z-scores. `None` means neutral.
pub fn classify_zscores<F: Float>(z: &ZScores<F>, th: &ToneThresholds<F>) -> Option<(ToneLabel, F)> {
    let label = if z.energy > th.high_energy && z.f0_var > th.high_f0_var {
        ToneLabel::Excited
    } else if z.energy > th.high_energy && z.rate > th.high_rate {
        ToneLabel::Urgent
    } else if z.energy < th.low_energy && z.rate < th.low_rate {
        ToneLabel::Calm
    } else if z.f0_var > th.concerned_f0_var && z.energy <= th.high_energy {
        ToneLabel::Concerned
    } else {
        return None;
    };
    let confidence = (z.max_abs() / th.confidence_scale).min(F::one());
    Some((label, confidence))
}

fn window_mean<F: Float>(window: &[ProsodyFrame<F>], feature: impl Fn(&ProsodyFrame<F>) -> F) -> F {
    let n = F::from(window.len()).expect("window length fits the scalar type");
    window.iter().map(feature).fold(F::zero(), |a, b| a + b) / n
}

/// Z-scores of the window means against the session statistics.
pub fn window_zscores<F: Float>(window: &[ProsodyFrame<F>], stats: &FeatureStats<F>) -> ZScores<F> {
    ZScores {
        energy: stats.energy.z(window_mean(window, |f| f.rms_energy)),
        f0_mean: stats.f0_mean.z(window_mean(window, |f| f.f0_mean)),
        f0_var: stats.f0_var.z(window_mean(window, |f| f.f0_var)),
        rate: stats.rate.z(window_mean(window, |f| f.rate)),
    }
}

/// Classifies a full window. Returns `None` for a short window, for windows
/// ending within the baseline period, and for neutral windows.
///
/// The returned cue spans the window and carries `seq`.
pub fn classify_tone<F: Float>(
    window: &[ProsodyFrame<F>],
    stats: &FeatureStats<F>,
    session_start: Timestamp,
    thresholds: &ToneThresholds<F>,
    seq: u64,
) -> Option<CueEvent> {
    if window.len() < WINDOW_FRAMES {
        return None;
    }
    let t_start = window[0].t;
    let t_end = window[window.len() - 1].t.saturating_add(FRAME_HOP_MS);
    if t_end.0 <= session_start.0 + BASELINE_MS {
        return None;
    }
    let z = window_zscores(window, stats);
    let (label, confidence) = classify_zscores(&z, thresholds)?;
    Some(CueEvent {
        source_seq: seq,
        label: CueLabel::Tone(label),
        t_start,
        t_end,
        confidence: confidence.to_f64().unwrap_or(0.0).clamp(0.0, 1.0),
        source_id: "prosody".into(),
    })
}

/// Owns the running statistics and a tumbling 10-frame window.
#[derive(Debug, Clone)]
pub struct ToneDetector<F: Float> {
    stats: FeatureStats<F>,
    window: VecDeque<ProsodyFrame<F>>,
    session_start: Option<Timestamp>,
    last_t: Option<Timestamp>,
    next_seq: u64,
    thresholds: ToneThresholds<F>,
}

impl<F: Float> Default for ToneDetector<F> {
    fn default() -> Self {
        Self::new(ToneThresholds::default())
    }
}

impl<F: Float> ToneDetector<F> {
    pub fn new(thresholds: ToneThresholds<F>) -> Self {
        ToneDetector {
            stats: FeatureStats::default(),
            window: VecDeque::with_capacity(WINDOW_FRAMES),
            session_start: None,
            last_t: None,
            next_seq: 1,
            thresholds,
        }
    }

    pub fn stats(&self) -> &FeatureStats<F> {
        &self.stats
    }

    /// Feeds one frame; returns a tone cue when a window completes with a
    /// non-neutral classification.
    pub fn push(&mut self, frame: ProsodyFrame<F>) -> Option<CueEvent> {
        let start = *self.session_start.get_or_insert(frame.t);
        self.last_t = Some(frame.t);
        self.stats.push(&frame);
        self.window.push_back(frame);
        if self.window.len() < WINDOW_FRAMES {
            return None;
        }
        let window: Vec<_> = self.window.drain(..).collect();
        let cue = classify_tone(&window, &self.stats, start, &self.thresholds, self.next_seq);
        if cue.is_some() {
            self.next_seq += 1;
        }
        cue
    }

    /// Earliest start any future cue can have.
    pub fn watermark(&self) -> Timestamp {
        match (self.window.front(), self.last_t) {
            (Some(first), _) => first.t,
            (None, Some(last)) => last.saturating_add(FRAME_HOP_MS),
            (None, None) => Timestamp::ZERO,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(energy: f64, f0_var: f64, rate: f64) -> ZScores<f64> {
        ZScores {
            energy,
            f0_mean: 0.0,
            f0_var,
            rate,
        }
    }

    #[test]
    fn neutral_baseline() {
        assert_eq!(classify_zscores(&ZScores::<f64>::zero(), &ToneThresholds::default()), None);
    }

    #[test]
    fn excited_rule() {
        // rule 1 fires; confidence = min(1, 2/3)
        let (label, conf) = classify_zscores(&z(2.0, 2.0, 0.0), &ToneThresholds::default()).unwrap();
        assert_eq!(label, ToneLabel::Excited);
        assert!((conf - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn first_match_ordering() {
        // rule 1 needs f0var > 1, so rule 2 wins
        let (label, conf) = classify_zscores(&z(2.0, 0.5, 2.0), &ToneThresholds::default()).unwrap();
        assert_eq!(label, ToneLabel::Urgent);
        assert!((conf - 2.0 / 3.0).abs() < 1e-12);
        // both rule 1 and rule 2 hold; rule 1 is first
        let (label, _) = classify_zscores(&z(2.0, 2.0, 2.0), &ToneThresholds::default()).unwrap();
        assert_eq!(label, ToneLabel::Excited);
    }

    #[test]
    fn calm_and_concerned() {
        let th = ToneThresholds::default();
        assert_eq!(classify_zscores(&z(-1.5, 0.0, -0.6), &th).map(|x| x.0), Some(ToneLabel::Calm));
        assert_eq!(classify_zscores(&z(-1.5, 0.0, -0.4), &th), None);
        assert_eq!(classify_zscores(&z(1.0, 1.6, 0.0), &th).map(|x| x.0), Some(ToneLabel::Concerned));
        assert_eq!(classify_zscores(&z(0.0, 1.5, 0.0), &th), None);
        // confidence saturates
        let (_, conf) = classify_zscores(&z(0.0, 9.0, 0.0), &th).unwrap();
        assert_eq!(conf, 1.0);
    }

    #[test]
    fn works_in_f32() {
        let zs = ZScores::<f32> {
            energy: 2.0,
            f0_mean: 0.0,
            f0_var: 2.0,
            rate: 0.0,
        };
        let (label, conf) = classify_zscores(&zs, &ToneThresholds::default()).unwrap();
        assert_eq!(label, ToneLabel::Excited);
        assert!((conf - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        let mut s = RunningStats::<f64>::default();
        xs.iter().for_each(|&x| s.push(x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((s.mean() - 5.0).abs() < 1e-12);
        assert!((s.variance() - var).abs() < 1e-12);
        assert!((s.std_dev() - 2.0).abs() < 1e-12);
        assert!((s.z(9.0) - 2.0).abs() < 1e-12);
    }

    fn frame(t: u64, rms: f64, f0v: f64, rate: f64) -> ProsodyFrame<f64> {
        ProsodyFrame {
            t: Timestamp(t),
            rms_energy: rms,
            f0_mean: 150.0,
            f0_var: f0v,
            rate,
        }
    }

    #[test]
    fn detector_waits_for_baseline() {
        let mut det = ToneDetector::<f64>::default();
        // loud excited frames from the very start are still baseline
        let cues: Vec<_> = (0..50)
            .filter_map(|i| det.push(frame(i * 100, 0.9, 900.0, 4.0)))
            .collect();
        assert!(cues.is_empty());
    }

    #[test]
    fn detector_flags_excited_burst() {
        let mut det = ToneDetector::<f64>::default();
        let mut cues = Vec::new();
        for i in 0..80u64 {
            // alternating baseline so the spread is non-zero
            let (rms, f0v) = if i % 2 == 0 { (0.3, 100.0) } else { (0.35, 120.0) };
            cues.extend(det.push(frame(i * 100, rms, f0v, 4.0)));
        }
        assert!(cues.is_empty(), "steady speech is neutral: {cues:?}");
        for i in 80..90u64 {
            cues.extend(det.push(frame(i * 100, 0.8, 600.0, 4.0)));
        }
        assert_eq!(cues.len(), 1);
        let cue = &cues[0];
        assert_eq!(cue.label, CueLabel::Tone(ToneLabel::Excited));
        assert_eq!((cue.t_start, cue.t_end), (Timestamp(8000), Timestamp(9000)));
        assert_eq!(cue.source_seq, 1);
        assert_eq!(det.watermark(), Timestamp(9000));
    }
}
