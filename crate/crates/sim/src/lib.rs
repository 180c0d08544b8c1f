//! Deterministic workloads, attack injection and experiment runners for the
//! runtime verifier.

pub mod attack;
pub mod clock;
pub mod experiment;
pub mod report;
pub mod stats;
pub mod throughput;
pub mod ttl;
pub mod workload;

pub use attack::{inject_attack, AttackKind, AttackScenario, Origin, Submission};
pub use clock::{ClockMode, SimClock, VIRTUAL_EPOCH};
pub use experiment::{
    ablation_run, attack_eval, run_experiment, run_experiment_detailed, run_submissions, AblationMatrix, AttackEval,
    EvalParams, ExperimentOptions, ExperimentRun, Processed, SimReport,
};
pub use report::{write_report, CsvRow, ReportError};
pub use stats::{Percentiles, StageLatencyPercentiles};
pub use throughput::{throughput_bench, ThroughputParams, ThroughputRow};
pub use ttl::{ttl_sweep, TtlSweepParams, TtlSweepRow};
pub use workload::{gen_legit_workload, LegitRequest, Workload, WorkloadParams};
