//! Wall-clock verification cost under paced offered load.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use ztrv_core::{Clock, NonceRegistry, StageTimings, Verifier, VerifierConfig};

use crate::attack::DEFAULT_CONCURRENCY;
use crate::clock::SimClock;
use crate::stats::StageLatencyPercentiles;
use crate::workload::{gen_legit_workload, Workload, WorkloadParams};

pub const DEFAULT_RATES: [u64; 4] = [100, 1_000, 5_000, 10_000];

#[derive(Debug, Clone)]
pub struct ThroughputParams {
    pub rates: Vec<u64>,
    pub duration: Duration,
    pub concurrency: usize,
    pub seed: u64,
}

impl Default for ThroughputParams {
    fn default() -> Self {
        Self {
            rates: DEFAULT_RATES.to_vec(),
            duration: Duration::from_secs(10),
            concurrency: DEFAULT_CONCURRENCY,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub offered_rps: u64,
    pub requests: u64,
    pub accepted: u64,
    /// Completions over `max(duration, time of last completion)`.
    pub achieved_rps: f64,
    /// Unpaced rate over the same requests against a fresh registry.
    pub capacity_rps: f64,
    pub stage_latency_percentiles: StageLatencyPercentiles,
}

/// Runs each offered rate for `duration` with `concurrency` paced workers.
/// Rates the host cannot keep up with show up as `achieved_rps < offered_rps`.
pub fn throughput_bench(params: &ThroughputParams) -> Vec<ThroughputRow> {
    params.rates.iter().map(|rate| bench_rate(*rate, params)).collect()
}

fn bench_rate(rate: u64, params: &ThroughputParams) -> ThroughputRow {
    let clock = SimClock::wall();
    let workload = gen_legit_workload(&WorkloadParams {
        start: clock.now(),
        ..WorkloadParams::new(rate, params.duration, params.seed)
    });
    let workers = params.concurrency.max(1);

    let verifier = fresh_verifier(&workload);
    let n = workload.requests.len();
    let interval_ns = 1e9 / rate as f64;
    let t0 = Instant::now();
    let per_worker: Vec<(Vec<(bool, StageTimings)>, Instant)> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (verifier, workload, clock) = (&verifier, &workload, &clock);
                s.spawn(move || {
                    let mut out = Vec::with_capacity(n / workers + 1);
                    for i in (w..n).step_by(workers) {
                        let due = t0 + Duration::from_nanos((i as f64 * interval_ns) as u64);
                        let now = Instant::now();
                        if due > now {
                            thread::sleep(due - now);
                        }
                        let (d, t) = verifier.verify_instrumented(&workload.requests[i].request, clock.now());
                        out.push((d.is_accept(), t));
                    }
                    (out, Instant::now())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });

    let finished = per_worker.iter().map(|(_, end)| *end).max().unwrap_or(t0);
    let elapsed = params.duration.max(finished - t0);
    let samples: Vec<(bool, StageTimings)> = per_worker.into_iter().flat_map(|(v, _)| v).collect();
    let accepted = samples.iter().filter(|(ok, _)| *ok).count() as u64;
    let percentiles = StageLatencyPercentiles::from_timings(samples.iter().filter(|(ok, _)| *ok).map(|(_, t)| t));

    ThroughputRow {
        offered_rps: rate,
        requests: n as u64,
        accepted,
        achieved_rps: samples.len() as f64 / elapsed.as_secs_f64(),
        capacity_rps: capacity(&workload, workers, &clock),
        stage_latency_percentiles: percentiles,
    }
}

fn fresh_verifier(workload: &Workload) -> Verifier {
    Verifier::new(VerifierConfig::default(), Arc::new(NonceRegistry::new()), workload.keystore.clone())
        .expect("default verifier config is valid")
}

/// Closed-loop verifications per second: every worker verifies back to back.
fn capacity(workload: &Workload, workers: usize, clock: &SimClock) -> f64 {
    let verifier = fresh_verifier(workload);
    let n = workload.requests.len();
    let start = Instant::now();
    thread::scope(|s| {
        for w in 0..workers {
            let verifier = &verifier;
            s.spawn(move || {
                for i in (w..n).step_by(workers) {
                    verifier.verify(&workload.requests[i].request, clock.now());
                }
            });
        }
    });
    n as f64 / start.elapsed().as_secs_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_bench_accepts_everything_and_reports_stages() {
        let params = ThroughputParams {
            rates: vec![200],
            duration: Duration::from_millis(500),
            concurrency: 4,
            seed: 2,
        };
        let rows = throughput_bench(&params);
        let r = &rows[0];
        assert_eq!((r.requests, r.accepted), (100, 100));
        assert!(r.achieved_rps > 0.0 && r.achieved_rps <= 200.0 + 1e-9);
        assert!(r.capacity_rps > 0.0);
        let p = r.stage_latency_percentiles;
        assert!(p.signature.p50 > 0 && p.context.p50 > 0 && p.registry.p50 > 0);
    }
}
