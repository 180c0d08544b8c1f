use std::fmt::Write;

use ztrv_core::Mode;
use ztrv_sim::{AblationMatrix, AttackEval, AttackKind, Percentiles, ThroughputRow, TtlSweepRow};

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

pub fn attack_eval(eval: &AttackEval, n: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode {} | {n} legitimate requests per scenario\n", eval.mode.as_str());
    let _ = writeln!(
        s,
        "{:<22} {:>9} {:>12} {:>13} {:>8} {:>9} {:>8}",
        "scenario", "launched", "intercepted", "interception", "legit", "accepted", "FPR"
    );
    let mut row = |name: &str, launched: u64, intercepted: u64, rate: f64, sent: u64, accepted: u64, fpr: f64| {
        let _ = writeln!(
            s,
            "{name:<22} {launched:>9} {intercepted:>12} {:>13} {sent:>8} {accepted:>9} {:>8}",
            pct(rate),
            pct(fpr)
        );
    };
    for r in &eval.scenarios {
        row(
            &r.scenario,
            r.attacks_launched,
            r.attacks_intercepted,
            r.interception_rate.unwrap_or(0.0),
            r.legit_sent,
            r.legit_accepted,
            r.false_positive_rate.unwrap_or(0.0),
        );
    }
    row(
        "all",
        eval.attacks_launched,
        eval.attacks_intercepted,
        eval.interception_rate,
        eval.legit_sent,
        eval.legit_accepted,
        eval.false_positive_rate,
    );
    s
}

pub fn ablation(m: &AblationMatrix) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<14}", "mode");
    for k in AttackKind::ALL {
        let _ = write!(s, " {:>21}", k.as_str());
    }
    s.push('\n');
    for mode in Mode::ALL {
        let _ = write!(s, "{:<14}", mode.as_str());
        for v in m.row(mode) {
            let _ = write!(s, " {v:>21.2}");
        }
        s.push('\n');
    }
    s
}

pub fn ttl(rows: &[TtlSweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>10} {:>12} {:>12} {:>10} {:>10}", "window_s", "peak", "expected", "MB", "accepted");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10} {:>12} {:>12} {:>10.2} {:>10}",
            r.window_secs,
            r.peak_entries,
            r.expected_entries,
            r.bytes_estimate as f64 / 1e6,
            r.legit_accepted
        );
    }
    s
}

fn micros(p: &Percentiles) -> String {
    format!("{:.1}/{:.1}/{:.1}", p.p50 as f64 / 1e3, p.p90 as f64 / 1e3, p.p99 as f64 / 1e3)
}

pub fn throughput(rows: &[ThroughputRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "latency columns: p50/p90/p99 in microseconds\n");
    let _ = writeln!(
        s,
        "{:>9} {:>10} {:>10} {:>20} {:>18} {:>18} {:>20}",
        "offered", "achieved", "capacity", "signature", "context", "registry", "total"
    );
    for r in rows {
        let p = &r.stage_latency_percentiles;
        let _ = writeln!(
            s,
            "{:>9} {:>10.0} {:>10.0} {:>20} {:>18} {:>18} {:>20}",
            r.offered_rps,
            r.achieved_rps,
            r.capacity_rps,
            micros(&p.signature),
            micros(&p.context),
            micros(&p.registry),
            micros(&p.total)
        );
    }
    s
}
