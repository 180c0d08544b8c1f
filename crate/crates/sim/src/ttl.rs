//! Registry footprint as a function of the freshness window.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ztrv_core::{Mode, DEFAULT_PER_ENTRY_BYTES};

use crate::attack::{Submission, DEFAULT_CONCURRENCY};
use crate::clock::SimClock;
use crate::experiment::{run_submissions, ExperimentOptions, LEGITIMATE};
use crate::workload::{gen_legit_workload, WorkloadParams};

pub const DEFAULT_WINDOWS_SECS: [u64; 4] = [5, 30, 60, 300];

#[derive(Debug, Clone)]
pub struct TtlSweepParams {
    pub windows: Vec<Duration>,
    pub rate: u64,
    pub duration: Duration,
    pub seed: u64,
    pub concurrency: usize,
}

impl Default for TtlSweepParams {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS_SECS.iter().map(|s| Duration::from_secs(*s)).collect(),
            rate: 10_000,
            duration: Duration::from_secs(10),
            seed: 0,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtlSweepRow {
    pub window_secs: f64,
    pub rate: u64,
    pub duration_secs: f64,
    pub requests: u64,
    pub legit_accepted: u64,
    pub peak_entries: u64,
    /// `rate × min(window, duration)`.
    pub expected_entries: u64,
    pub bytes_estimate: u64,
}

/// Replays one legitimate workload under each window on a virtual clock and
/// records the registry's peak occupancy.
pub fn ttl_sweep(params: &TtlSweepParams) -> Vec<TtlSweepRow> {
    let workload = gen_legit_workload(&WorkloadParams::new(params.rate, params.duration, params.seed));
    params
        .windows
        .iter()
        .map(|window| {
            let options = ExperimentOptions {
                concurrency: params.concurrency,
                window: *window,
                ..ExperimentOptions::default()
            };
            let clock = SimClock::virtual_at(workload.params.start);
            let submissions = workload.requests.iter().map(Submission::from).collect();
            let run = run_submissions(Mode::Full, LEGITIMATE, submissions, workload.keystore.clone(), &options, &clock);
            let stats = run.report.registry_stats;
            let peak = stats.peak_count;
            let retained = (*window).min(params.duration);
            TtlSweepRow {
                window_secs: window.as_secs_f64(),
                rate: params.rate,
                duration_secs: params.duration.as_secs_f64(),
                requests: run.report.legit_sent,
                legit_accepted: run.report.legit_accepted,
                peak_entries: peak,
                expected_entries: (u128::from(params.rate) * retained.as_millis() / 1000) as u64,
                bytes_estimate: peak * DEFAULT_PER_ENTRY_BYTES,
            }
        })
        .collect()
}
