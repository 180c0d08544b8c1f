//! Drives legitimate and attack submissions through an in-process verifier.

use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ztrv_core::{
    Clock, Decision, Keystore, Mode, NonceRegistry, NonceStore, RegistryStats, StageTimings,
    Timestamp, Verifier, VerifierConfig,
};

use crate::attack::{inject_attack, AttackKind, AttackScenario, Origin, Submission, DEFAULT_CONCURRENCY, DEFAULT_REPLAY_COUNT};
use crate::clock::SimClock;
use crate::stats::StageLatencyPercentiles;
use crate::workload::{gen_legit_workload, Workload, WorkloadParams};

/// Scenario label for runs without attack traffic.
pub const LEGITIMATE: &str = "legitimate";

/// Registry GC cadence in virtual time.
pub const DEFAULT_SWEEP_INTERVAL: Duration = Duration::from_millis(250);

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    /// Worker threads; overridden by the scenario's own concurrency.
    pub concurrency: usize,
    /// Record per-stage timings (wall-clock, so not reproducible).
    pub instrument: bool,
    pub window: Duration,
    pub sweep_interval: Duration,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            concurrency: DEFAULT_CONCURRENCY,
            instrument: false,
            window: ztrv_core::verifier::DEFAULT_WINDOW,
            sweep_interval: DEFAULT_SWEEP_INTERVAL,
        }
    }
}

/// Aggregate result of one (mode, scenario) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub mode: Mode,
    pub attacks_launched: u64,
    pub attacks_intercepted: u64,
    /// `None` when no attacks were launched.
    pub interception_rate: Option<f64>,
    pub legit_sent: u64,
    pub legit_accepted: u64,
    /// `None` when no legitimate requests were sent.
    pub false_positive_rate: Option<f64>,
    pub stage_latency_percentiles: Option<StageLatencyPercentiles>,
    pub registry_stats: RegistryStats,
}

/// One submission and what the verifier decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Processed {
    pub at: Timestamp,
    pub origin: Origin,
    pub decision: Decision,
    pub timings: Option<StageTimings>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: SimReport,
    pub processed: Vec<Processed>,
}

/// Runs the workload plus the scenario's attacks (if any) and reports.
pub fn run_experiment(
    mode: Mode,
    scenario: Option<&AttackScenario>,
    workload: &Workload,
    options: &ExperimentOptions,
    clock: &SimClock,
) -> SimReport {
    run_experiment_detailed(mode, scenario, workload, options, clock).report
}

pub fn run_experiment_detailed(
    mode: Mode,
    scenario: Option<&AttackScenario>,
    workload: &Workload,
    options: &ExperimentOptions,
    clock: &SimClock,
) -> ExperimentRun {
    let mut submissions: Vec<Submission> = workload.requests.iter().map(Submission::from).collect();
    let mut options = options.clone();
    let label = match scenario {
        Some(s) => {
            submissions.extend(inject_attack(s, &workload.requests));
            options.concurrency = s.concurrency;
            s.kind.as_str()
        }
        None => LEGITIMATE,
    };
    run_submissions(mode, label, submissions, workload.keystore.clone(), &options, clock)
}

/// Processes `submissions` in time order. Submissions sharing an instant form
/// a wave and are verified concurrently on `options.concurrency` workers.
pub fn run_submissions(
    mode: Mode,
    label: &str,
    mut submissions: Vec<Submission>,
    keystore: Arc<dyn Keystore>,
    options: &ExperimentOptions,
    clock: &SimClock,
) -> ExperimentRun {
    let config = VerifierConfig {
        mode,
        window: options.window,
        ..VerifierConfig::default()
    };
    let registry = Arc::new(NonceRegistry::new());
    let verifier = Verifier::new(config, registry.clone(), keystore).expect("experiment verifier config is valid");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.concurrency.max(1))
        .build()
        .expect("worker pool");

    submissions.sort_by_key(|s| s.at);
    let verify_one = |s: &Submission| {
        let now = clock.now();
        let (decision, timings) = if options.instrument {
            let (d, t) = verifier.verify_instrumented(&s.request, now);
            (d, Some(t))
        } else {
            (verifier.verify(&s.request, now), None)
        };
        Processed {
            at: s.at,
            origin: s.origin,
            decision,
            timings,
        }
    };

    let mut processed = Vec::with_capacity(submissions.len());
    let mut next_sweep: Option<Timestamp> = None;
    for wave in submissions.chunk_by(|a, b| a.at == b.at) {
        clock.set(wave[0].at);
        let now = clock.now();
        match next_sweep {
            Some(due) if now < due => {}
            _ => {
                registry.sweep(now);
                next_sweep = Some(now.saturating_add(options.sweep_interval));
            }
        }
        if wave.len() == 1 {
            processed.push(verify_one(&wave[0]));
        } else {
            let results: Vec<Processed> = pool.install(|| wave.par_iter().map(verify_one).collect());
            processed.extend(results);
        }
    }

    let report = summarize(mode, label, &processed, registry.stats(), options.instrument);
    ExperimentRun { report, processed }
}

fn summarize(mode: Mode, label: &str, processed: &[Processed], registry_stats: RegistryStats, instrumented: bool) -> SimReport {
    let (mut launched, mut intercepted, mut sent, mut accepted) = (0u64, 0u64, 0u64, 0u64);
    for p in processed {
        match p.origin {
            Origin::Legit => {
                sent += 1;
                accepted += u64::from(p.decision.is_accept());
            }
            Origin::Attack(_) => {
                launched += 1;
                intercepted += u64::from(!p.decision.is_accept());
            }
        }
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    SimReport {
        scenario: label.to_owned(),
        mode,
        attacks_launched: launched,
        attacks_intercepted: intercepted,
        interception_rate: ratio(intercepted, launched),
        legit_sent: sent,
        legit_accepted: accepted,
        false_positive_rate: ratio(sent - accepted, sent),
        stage_latency_percentiles: instrumented
            .then(|| StageLatencyPercentiles::from_timings(processed.iter().filter_map(|p| p.timings.as_ref()))),
        registry_stats,
    }
}

fn scenario_seed(seed: u64, kind: AttackKind) -> u64 {
    let idx = AttackKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(idx + 1)
}

#[derive(Debug, Clone)]
pub struct EvalParams {
    pub n_legit: u64,
    pub seed: u64,
    pub replay_count: usize,
    pub concurrency: usize,
    pub instrument: bool,
}

impl EvalParams {
    pub fn new(n_legit: u64, seed: u64) -> Self {
        Self {
            n_legit,
            seed,
            replay_count: DEFAULT_REPLAY_COUNT,
            concurrency: DEFAULT_CONCURRENCY,
            instrument: false,
        }
    }

    fn scenario(&self, kind: AttackKind) -> AttackScenario {
        AttackScenario {
            kind,
            replay_count: self.replay_count,
            concurrency: self.concurrency,
            seed: scenario_seed(self.seed, kind),
        }
    }

    fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            concurrency: self.concurrency,
            instrument: self.instrument,
            ..ExperimentOptions::default()
        }
    }
}

/// Per-scenario reports for one mode plus totals across scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEval {
    pub mode: Mode,
    pub scenarios: Vec<SimReport>,
    pub attacks_launched: u64,
    pub attacks_intercepted: u64,
    pub interception_rate: f64,
    pub legit_sent: u64,
    pub legit_accepted: u64,
    pub false_positive_rate: f64,
}

/// Runs every attack scenario against `n_legit` legitimate requests in `mode`.
pub fn attack_eval(mode: Mode, params: &EvalParams) -> AttackEval {
    let workload = gen_legit_workload(&WorkloadParams::with_count(params.n_legit, params.seed));
    attack_eval_on(mode, params, &workload)
}

fn attack_eval_on(mode: Mode, params: &EvalParams, workload: &Workload) -> AttackEval {
    let scenarios: Vec<SimReport> = AttackKind::ALL
        .iter()
        .map(|kind| {
            let clock = SimClock::virtual_at(workload.params.start);
            run_experiment(mode, Some(&params.scenario(*kind)), workload, &params.options(), &clock)
        })
        .collect();
    let launched: u64 = scenarios.iter().map(|r| r.attacks_launched).sum();
    let intercepted: u64 = scenarios.iter().map(|r| r.attacks_intercepted).sum();
    let sent: u64 = scenarios.iter().map(|r| r.legit_sent).sum();
    let accepted: u64 = scenarios.iter().map(|r| r.legit_accepted).sum();
    AttackEval {
        mode,
        scenarios,
        attacks_launched: launched,
        attacks_intercepted: intercepted,
        interception_rate: if launched == 0 { 0.0 } else { intercepted as f64 / launched as f64 },
        legit_sent: sent,
        legit_accepted: accepted,
        false_positive_rate: if sent == 0 { 0.0 } else { (sent - accepted) as f64 / sent as f64 },
    }
}

/// Interception rates for every (mode, scenario) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    /// Rows in [`Mode::ALL`] order, columns in [`AttackKind::ALL`] order.
    pub rates: Vec<[f64; 3]>,
    pub reports: Vec<SimReport>,
}

impl AblationMatrix {
    pub fn row(&self, mode: Mode) -> [f64; 3] {
        let i = Mode::ALL.iter().position(|m| *m == mode).expect("every mode has a row");
        self.rates[i]
    }
}

pub fn ablation_run(params: &EvalParams) -> AblationMatrix {
    let workload = gen_legit_workload(&WorkloadParams::with_count(params.n_legit, params.seed));
    let mut rates = Vec::with_capacity(Mode::ALL.len());
    let mut reports = Vec::with_capacity(Mode::ALL.len() * AttackKind::ALL.len());
    for mode in Mode::ALL {
        let eval = attack_eval_on(mode, params, &workload);
        let mut row = [0.0; 3];
        for (cell, report) in row.iter_mut().zip(&eval.scenarios) {
            *cell = report.interception_rate.unwrap_or(0.0);
        }
        rates.push(row);
        reports.extend(eval.scenarios);
    }
    AblationMatrix { rates, reports }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ztrv_core::Reason;

    fn small() -> Workload {
        gen_legit_workload(&WorkloadParams::with_count(200, 3))
    }

    fn run(mode: Mode, kind: Option<AttackKind>, w: &Workload) -> ExperimentRun {
        let scenario = kind.map(|k| AttackScenario { replay_count: 20, ..AttackScenario::new(k, 9) });
        run_experiment_detailed(mode, scenario.as_ref(), w, &ExperimentOptions::default(), &SimClock::virtual_at(w.params.start))
    }

    #[test]
    fn legit_only_has_no_false_positives_in_any_mode() {
        let w = small();
        for mode in Mode::ALL {
            let r = run(mode, None, &w).report;
            assert_eq!(r.scenario, LEGITIMATE);
            assert_eq!((r.legit_sent, r.legit_accepted), (200, 200));
            assert_eq!(r.false_positive_rate, Some(0.0));
            assert_eq!(r.interception_rate, None);
        }
    }

    #[test]
    fn full_mode_intercepts_with_expected_reasons() {
        let w = small();
        let expect = [
            (AttackKind::SameContextReplay, Reason::ReplayDetected),
            (AttackKind::CrossContextReplay, Reason::ContextMismatch),
            (AttackKind::ContextRedirect, Reason::ContextMismatch),
        ];
        for (kind, reason) in expect {
            let run = run(Mode::Full, Some(kind), &w);
            assert_eq!(run.report.interception_rate, Some(1.0), "{kind}");
            assert_eq!(run.report.false_positive_rate, Some(0.0));
            assert!(run
                .processed
                .iter()
                .filter(|p| p.origin != Origin::Legit)
                .all(|p| p.decision.reason() == reason));
        }
    }

    #[test]
    fn nonce_only_harvest_attack_burns_the_victims_nonce() {
        let w = small();
        let r = run(Mode::NonceOnly, Some(AttackKind::CrossContextReplay), &w).report;
        assert_eq!(r.interception_rate, Some(0.0));
        assert_eq!(r.legit_sent - r.legit_accepted, 20);
    }

    #[test]
    fn conservation_and_reproducibility() {
        let w = small();
        let a = run(Mode::Full, Some(AttackKind::SameContextReplay), &w);
        let b = run(Mode::Full, Some(AttackKind::SameContextReplay), &w);
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.attacks_launched + a.report.legit_sent, a.processed.len() as u64);
        assert_eq!(a.report.attacks_launched, 20);
    }

    #[test]
    fn instrumented_runs_report_percentiles() {
        let w = small();
        let opts = ExperimentOptions { instrument: true, ..ExperimentOptions::default() };
        let r = run_experiment(Mode::Full, None, &w, &opts, &SimClock::virtual_at(w.params.start));
        let p = r.stage_latency_percentiles.expect("instrumented");
        assert!(p.signature.p50 > 0 && p.context.p50 > 0 && p.registry.p50 > 0);
        assert!(p.total.p50 >= p.signature.p50);
    }

    #[test]
    fn small_ablation_matrix() {
        let params = EvalParams { replay_count: 10, ..EvalParams::new(150, 4) };
        let m = ablation_run(&params);
        assert_eq!(m.row(Mode::Baseline), [0.0, 0.0, 0.0]);
        assert_eq!(m.row(Mode::ContextOnly), [0.0, 1.0, 1.0]);
        assert_eq!(m.row(Mode::NonceOnly), [1.0, 0.0, 0.0]);
        assert_eq!(m.row(Mode::Full), [1.0, 1.0, 1.0]);
        assert_eq!(m.reports.len(), 12);
    }
}
