//! Pipeline counters shared between the fusion task, ingest connections and
//! the metrics endpoint.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::fusion::FusionStats;
use crate::ingest::{RejectReason, Source};

/// Rejection buckets: ordering failures first, then decode failures.
pub const REJECT_REASONS: [&str; 9] = [
    "gap",
    "regressed",
    "out_of_order",
    "late",
    "watermark_regressed",
    "malformed_json",
    "unsupported_version",
    "schema_violation",
    "unknown_label",
];

/// Index 4 collects lines whose source could not be determined.
const SOURCE_SLOTS: usize = 5;
const UNKNOWN_SOURCE: usize = 4;

fn slot_name(i: usize) -> &'static str {
    Source::ALL.get(i).map_or("unknown", |s| s.as_str())
}

#[derive(Debug, Default)]
pub struct Metrics {
    events_in: [AtomicU64; SOURCE_SLOTS],
    accepted: [AtomicU64; SOURCE_SLOTS],
    rejected_by_source: [AtomicU64; SOURCE_SLOTS],
    rejected_by_reason: [AtomicU64; REJECT_REASONS.len()],
    buffer_overflows: AtomicU64,
    segments_final: AtomicU64,
    cues_accepted: AtomicU64,
    cues_attached: AtomicU64,
    cues_dropped: AtomicU64,
    cues_pending: AtomicU64,
    sources_disconnected: AtomicU64,
    latencies_ms: Mutex<Vec<u64>>,
}

fn bump(counter: &AtomicU64) {
    counter.fetch_add(1, Ordering::Relaxed);
}

fn load(counter: &AtomicU64) -> u64 {
    counter.load(Ordering::Relaxed)
}

impl Metrics {
    pub fn new() -> Self {
        Metrics::default()
    }

    fn slot(source: Option<Source>) -> usize {
        source.map_or(UNKNOWN_SOURCE, Source::index)
    }

    pub fn event_in(&self, source: Option<Source>) {
        bump(&self.events_in[Self::slot(source)]);
    }

    pub fn accepted(&self, source: Source) {
        bump(&self.accepted[source.index()]);
    }

    /// Counts a rejection; `reason` should be one of [`REJECT_REASONS`].
    pub fn rejected(&self, source: Option<Source>, reason: &str) {
        bump(&self.rejected_by_source[Self::slot(source)]);
        match REJECT_REASONS.iter().position(|r| *r == reason) {
            Some(i) => bump(&self.rejected_by_reason[i]),
            None => tracing::warn!(reason, "unbucketed rejection reason"),
        }
    }

    pub fn rejected_order(&self, source: Source, reason: RejectReason) {
        self.rejected(Some(source), reason.as_str());
    }

    pub fn buffer_overflow(&self) {
        bump(&self.buffer_overflows);
    }

    pub fn source_disconnected(&self) {
        bump(&self.sources_disconnected);
    }

    pub fn segment_finalized(&self, latency_ms: u64) {
        bump(&self.segments_final);
        self.latencies_ms
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(latency_ms);
    }

    pub fn set_cue_stats(&self, stats: &FusionStats) {
        self.cues_accepted.store(stats.cues_accepted, Ordering::Relaxed);
        self.cues_attached.store(stats.cues_attached, Ordering::Relaxed);
        self.cues_dropped.store(stats.cues_dropped, Ordering::Relaxed);
        self.cues_pending.store(stats.cues_pending, Ordering::Relaxed);
    }

    pub fn report(&self) -> MetricsReport {
        let per_source = |counters: &[AtomicU64; SOURCE_SLOTS]| -> BTreeMap<String, u64> {
            (0..SOURCE_SLOTS)
                .filter(|&i| i != UNKNOWN_SOURCE || load(&counters[i]) > 0)
                .map(|i| (slot_name(i).to_string(), load(&counters[i])))
                .collect()
        };
        let latencies = self
            .latencies_ms
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone();
        MetricsReport {
            events_in: per_source(&self.events_in),
            events_accepted: per_source(&self.accepted),
            events_rejected: RejectCounts {
                by_source: per_source(&self.rejected_by_source),
                by_reason: REJECT_REASONS
                    .iter()
                    .zip(&self.rejected_by_reason)
                    .map(|(r, c)| (r.to_string(), load(c)))
                    .collect(),
            },
            buffer_overflows: load(&self.buffer_overflows),
            segments_final: load(&self.segments_final),
            finalization_latency_ms: LatencySummary::from_samples(latencies),
            cues_accepted: load(&self.cues_accepted),
            cues_attached: load(&self.cues_attached),
            cues_dropped: load(&self.cues_dropped),
            cues_pending: load(&self.cues_pending),
            sources_disconnected: load(&self.sources_disconnected),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    pub by_source: BTreeMap<String, u64>,
    pub by_reason: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50: u64,
    pub p95: u64,
    pub max: u64,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencySummary {
    pub fn from_samples(mut samples: Vec<u64>) -> Self {
        samples.sort_unstable();
        LatencySummary {
            p50: percentile(&samples, 50.0),
            p95: percentile(&samples, 95.0),
            max: samples.last().copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub events_in: BTreeMap<String, u64>,
    pub events_accepted: BTreeMap<String, u64>,
    pub events_rejected: RejectCounts,
    pub buffer_overflows: u64,
    pub segments_final: u64,
    pub finalization_latency_ms: LatencySummary,
    pub cues_accepted: u64,
    pub cues_attached: u64,
    pub cues_dropped: u64,
    pub cues_pending: u64,
    pub sources_disconnected: u64,
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Checks the report's internal invariants, naming the first one that
    /// fails.
    pub fn check_invariants(&self) -> Result<(), String> {
        let l = &self.finalization_latency_ms;
        if !(l.p50 <= l.p95 && l.p95 <= l.max) {
            return Err(format!("latency percentiles out of order: {l:?}"));
        }
        for (source, n) in &self.events_in {
            let accepted = self.events_accepted.get(source).copied().unwrap_or(0);
            let rejected = self.events_rejected.by_source.get(source).copied().unwrap_or(0);
            if *n != accepted + rejected {
                return Err(format!("{source}: events_in {n} != accepted {accepted} + rejected {rejected}"));
            }
        }
        if self.cues_attached + self.cues_dropped + self.cues_pending != self.cues_accepted {
            return Err(format!(
                "cues: attached {} + dropped {} + pending {} != accepted {}",
                self.cues_attached, self.cues_dropped, self.cues_pending, self.cues_accepted
            ));
        }
        Ok(())
    }
}
