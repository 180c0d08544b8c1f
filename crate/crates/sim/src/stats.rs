use serde::{Deserialize, Serialize};
use ztrv_core::StageTimings;

/// Nearest-rank percentiles, nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
}

impl Percentiles {
    /// Sorts `samples` in place. Empty input gives all zeros.
    pub fn from_samples(samples: &mut [u64]) -> Self {
        samples.sort_unstable();
        Self {
            p50: nearest_rank(samples, 50),
            p90: nearest_rank(samples, 90),
            p99: nearest_rank(samples, 99),
        }
    }
}

fn nearest_rank(sorted: &[u64], pct: usize) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLatencyPercentiles {
    pub signature: Percentiles,
    pub context: Percentiles,
    pub registry: Percentiles,
    pub total: Percentiles,
}

impl StageLatencyPercentiles {
    /// Stages reporting 0 were skipped and are left out of that stage's sample.
    pub fn from_timings<'a>(timings: impl IntoIterator<Item = &'a StageTimings>) -> Self {
        let (mut sig, mut ctx, mut reg, mut tot) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for t in timings {
            for (v, bucket) in [
                (t.signature_ns, &mut sig),
                (t.context_ns, &mut ctx),
                (t.registry_ns, &mut reg),
                (t.total_ns, &mut tot),
            ] {
                if v > 0 {
                    bucket.push(v);
                }
            }
        }
        Self {
            signature: Percentiles::from_samples(&mut sig),
            context: Percentiles::from_samples(&mut ctx),
            registry: Percentiles::from_samples(&mut reg),
            total: Percentiles::from_samples(&mut tot),
        }
    }
}
