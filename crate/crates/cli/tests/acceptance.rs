//! Acceptance checks for the verifier, the harness and the gateway.
//!
//! Runs without the libtest harness so the criteria execute one after another
//! (several of them time themselves) and each prints a single PASS/FAIL line.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Barrier, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ztrv_core::{
    issue_mandate, ExecutionContext, IssuerKey, Mode, NonceRegistry, NonceStore, PaymentPayload, Reason,
    StaticKeystore, SystemClock, Timestamp, VerificationRequest, Verifier, VerifierConfig,
};
use ztrv_gateway::{Gateway, GatewayConfig, MockMerchant, FULFILL_PATH};
use ztrv_sim::{throughput_bench, ttl_sweep, SimReport, ThroughputParams, TtlSweepParams, VIRTUAL_EPOCH};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ztrv(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ztrv")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("ztrv {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

fn read_reports(path: &Path) -> Result<Vec<SimReport>, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn issuer(seed: u64) -> (IssuerKey, Arc<StaticKeystore>) {
    let key = IssuerKey::generate("acceptance", &mut StdRng::seed_from_u64(seed));
    let ks = Arc::new(StaticKeystore::new().with_key("acceptance", key.public_key()));
    (key, ks)
}

fn request(key: &IssuerKey, task: String, issued_at: Timestamp, rng: &mut StdRng) -> VerificationRequest {
    let ctx = ExecutionContext::new(task, "agent-0007", "merchant-003", "checkout");
    let mandate = issue_mandate(key, &ctx, PaymentPayload::new(rng.gen_range(1..100_000), "EUR"), issued_at, rng);
    VerificationRequest::new(mandate, ctx)
}

fn verifier(mode: Mode, window: Duration, ks: &Arc<StaticKeystore>) -> (Verifier, Arc<NonceRegistry>) {
    let registry = Arc::new(NonceRegistry::new());
    let config = VerifierConfig {
        window,
        ..VerifierConfig::with_mode(mode)
    };
    (Verifier::new(config, registry.clone(), ks.clone()).unwrap(), registry)
}

fn table1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    ztrv(&["attack-eval", "--mode", "full", "--n", "5000", "--seed", "42", "--out", out, "--fixed-name", "full"])?;
    let full_secs = start.elapsed().as_secs_f64();
    ztrv(&["attack-eval", "--mode", "baseline", "--n", "5000", "--seed", "42", "--out", out, "--fixed-name", "base"])?;

    let full = read_reports(&dir.path().join("attack-eval_full.json"))?;
    let base = read_reports(&dir.path().join("attack-eval_base.json"))?;
    ensure(full.len() == 3 && base.len() == 3, || "expected three scenarios per mode".into())?;
    let launched: u64 = full.iter().map(|r| r.attacks_launched).sum();
    let intercepted: u64 = full.iter().map(|r| r.attacks_intercepted).sum();
    for r in &full {
        ensure(r.legit_sent == 5000 && r.legit_accepted == 5000, || format!("{}: FPR {:?}", r.scenario, r.false_positive_rate))?;
    }
    ensure(launched > 0 && intercepted == launched, || format!("full intercepted {intercepted}/{launched}"))?;
    let base_intercepted: u64 = base.iter().map(|r| r.attacks_intercepted).sum();
    ensure(base_intercepted == 0, || format!("baseline intercepted {base_intercepted}"))?;
    ensure(full_secs < 30.0, || format!("full run took {full_secs:.1}s"))?;
    Ok(format!(
        "full 100.00% ({intercepted}/{launched}), FPR 0.00% over 5000 per scenario; baseline 0.00%; {full_secs:.1}s"
    ))
}

fn ablation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    ztrv(&["ablation", "--seed", "7", "--out", out, "--fixed-name", "m"])?;
    let secs = start.elapsed().as_secs_f64();
    let reports = read_reports(&dir.path().join("ablation_m.json"))?;
    let expected: BTreeMap<(&str, &str), f64> = [
        (Mode::Baseline, [0.0, 0.0, 0.0]),
        (Mode::ContextOnly, [0.0, 1.0, 1.0]),
        (Mode::NonceOnly, [1.0, 0.0, 0.0]),
        (Mode::Full, [1.0, 1.0, 1.0]),
    ]
    .into_iter()
    .flat_map(|(m, row)| {
        ["same-context-replay", "cross-context-replay", "context-redirect"]
            .into_iter()
            .zip(row)
            .map(move |(s, v)| ((m.as_str(), s), v))
    })
    .collect();
    ensure(reports.len() == 12, || format!("{} cells", reports.len()))?;
    for r in &reports {
        let want = expected.get(&(r.mode.as_str(), r.scenario.as_str())).copied();
        ensure(r.interception_rate == want, || {
            format!("{} / {}: {:?} != {want:?}", r.mode.as_str(), r.scenario, r.interception_rate)
        })?;
    }
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("4x3 matrix exact; {secs:.1}s"))
}

fn ttl() -> Outcome {
    let start = Instant::now();
    let rows = ttl_sweep(&TtlSweepParams::default());
    let secs = start.elapsed().as_secs_f64();
    let mut peaks = Vec::new();
    for r in &rows {
        let want = 10_000.0 * r.window_secs.min(10.0);
        let err = (r.peak_entries as f64 - want).abs() / want;
        ensure(err <= 0.05, || format!("window {}: peak {} vs {want}", r.window_secs, r.peak_entries))?;
        peaks.push(r.peak_entries);
    }
    ensure(rows.len() == 4, || "four windows".into())?;
    ensure(peaks[1] == peaks[2] && peaks[2] == peaks[3], || format!("no plateau: {peaks:?}"))?;
    let bytes = rows[3].bytes_estimate as f64;
    ensure((bytes - 12.5e6).abs() / 12.5e6 <= 0.10, || format!("plateau bytes {bytes}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("peaks {peaks:?}, plateau {:.2} MB; {secs:.1}s", bytes / 1e6))
}

/// Serial reference: the same request applied `n` times in order.
fn serial_oracle(n: usize, req: &VerificationRequest, ks: &Arc<StaticKeystore>, now: Timestamp) -> Vec<Reason> {
    let (v, _) = verifier(Mode::Full, Duration::from_secs(60), ks);
    let mut out: Vec<Reason> = (0..n).map(|_| v.verify(req, now).reason()).collect();
    out.sort();
    out
}

fn exactly_one(n: usize, trials: usize, seed: u64) -> Result<(), String> {
    let (key, ks) = issuer(seed);
    let mut rng = StdRng::seed_from_u64(seed);
    let now = VIRTUAL_EPOCH;
    let trial_state: RwLock<Option<(Verifier, VerificationRequest, u64)>> = RwLock::new(None);
    let results = Mutex::new(Vec::with_capacity(n));
    let (start, done) = (Barrier::new(n + 1), Barrier::new(n + 1));

    std::thread::scope(|s| {
        for w in 0..n {
            let (trial_state, results, start, done) = (&trial_state, &results, &start, &done);
            s.spawn(move || loop {
                start.wait();
                let Some((v, req, trial_seed)) = trial_state.read().unwrap().clone() else {
                    break;
                };
                let mut jitter = StdRng::seed_from_u64(trial_seed ^ w as u64);
                for _ in 0..jitter.gen_range(0..4) {
                    std::thread::yield_now();
                }
                let reason = v.verify(&req, now).reason();
                results.lock().unwrap().push(reason);
                done.wait();
            });
        }

        let mut failure = None;
        for t in 0..trials {
            let req = request(&key, format!("trial-{t}"), now, &mut rng);
            let expected = serial_oracle(n, &req, &ks, now);
            let (v, _) = verifier(Mode::Full, Duration::from_secs(60), &ks);
            *trial_state.write().unwrap() = Some((v, req, rng.gen()));
            start.wait();
            done.wait();
            let mut got = std::mem::take(&mut *results.lock().unwrap());
            got.sort();
            let accepts = got.iter().filter(|r| **r == Reason::Authorized).count();
            let replays = got.iter().filter(|r| **r == Reason::ReplayDetected).count();
            if got != expected || accepts != 1 || replays != n - 1 {
                failure.get_or_insert(format!("N={n} trial {t}: {accepts} accepts, {replays} replays"));
            }
        }
        *trial_state.write().unwrap() = None;
        start.wait();
        failure.map_or(Ok(()), Err)
    })
}

fn exactly_one_accept() -> Outcome {
    let trials = 1000;
    for (i, n) in [2usize, 16, 256].into_iter().enumerate() {
        exactly_one(n, trials, 100 + i as u64)?;
    }
    Ok(format!("N in {{2, 16, 256}} x {trials} trials, 0 violations"))
}

fn replay_closure() -> Outcome {
    let (key, ks) = issuer(5);
    let mut rng = StdRng::seed_from_u64(5);
    let mut checked = 0;
    for window_secs in [5u64, 60] {
        let window = Duration::from_secs(window_secs);
        let window_ms = window_secs as i64 * 1000;
        for first_use_ms in [0, window_ms / 2, window_ms] {
            for step in 0..=(30 * window_secs as i64) {
                let offset_ms = step * 100;
                let (v, _) = verifier(Mode::Full, window, &ks);
                let issued = VIRTUAL_EPOCH;
                let req = request(&key, format!("closure-{step}"), issued, &mut rng);
                let first_at = Timestamp::from_millis(issued.as_millis() + first_use_ms);
                let first = v.verify(&req, first_at);
                ensure(first.is_accept(), || format!("first use at +{first_use_ms}ms rejected: {:?}", first.reason()))?;
                let replay_at = Timestamp::from_millis(first_at.as_millis() + offset_ms);
                let reason = v.verify(&req, replay_at).reason();
                let age = replay_at.as_millis() - issued.as_millis();
                let want = if age <= window_ms { Reason::ReplayDetected } else { Reason::MandateExpired };
                ensure(reason == want, || {
                    format!("window {window_secs}s first +{first_use_ms}ms replay +{offset_ms}ms: {reason:?}, want {want:?}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} replay offsets over [0, 3 window] in 0.1 s steps, 0 second accepts"))
}

fn side_effect_isolation() -> Outcome {
    let (key, ks) = issuer(6);
    let (stranger, _) = issuer(66);
    let mut rng = StdRng::seed_from_u64(6);
    let window = Duration::from_secs(60);
    let (v, registry) = verifier(Mode::Full, window, &ks);
    let now = Timestamp::from_millis(VIRTUAL_EPOCH.as_millis() + 30_000);
    for i in 0..64 {
        let req = request(&key, format!("seed-{i}"), now, &mut rng);
        ensure(v.verify(&req, now).is_accept(), || "seeding accept failed".into())?;
    }
    let mut by_reason: BTreeMap<Reason, usize> = BTreeMap::new();
    for i in 0..10_000 {
        let mut req = request(&key, format!("bad-{i}"), now, &mut rng);
        let mut at = now;
        match rng.gen_range(0..8) {
            0 => {
                let j = rng.gen_range(0..req.mandate.signature.len());
                req.mandate.signature[j] ^= 1 << rng.gen_range(0..8);
            }
            1 => req.mandate.payload.amount += 1,
            2 => req = request(&stranger, format!("bad-{i}"), now, &mut rng),
            3 => at = Timestamp::from_millis(now.as_millis() + 60_001 + rng.gen_range(0..1_000_000)),
            4 => at = Timestamp::from_millis(now.as_millis() - 1 - rng.gen_range(0..1_000_000)),
            5 => req.context.merchant_id.push('x'),
            6 => req.context.scope = "refund".into(),
            _ => req.context.agent_id = format!("agent-{}", rng.gen_range(1000..9999)),
        }
        let before = (registry.stats().live_count, registry.snapshot());
        let reason = v.verify(&req, at).reason();
        ensure(
            matches!(reason, Reason::InvalidSignature | Reason::MandateExpired | Reason::ContextMismatch),
            || format!("request {i}: unexpected {reason:?}"),
        )?;
        let after = (registry.stats().live_count, registry.snapshot());
        ensure(before == after, || format!("request {i} ({reason:?}) changed the registry"))?;
        *by_reason.entry(reason).or_default() += 1;
    }
    Ok(format!("10000 rejections {by_reason:?}, registry unchanged after each"))
}

fn throughput() -> Outcome {
    let rows = throughput_bench(&ThroughputParams {
        rates: vec![100, 10_000],
        duration: Duration::from_secs(3),
        ..ThroughputParams::default()
    });
    let (low, high) = (&rows[0], &rows[1]);
    for r in &rows {
        ensure(r.accepted == r.requests, || format!("{} rps: {}/{} accepted", r.offered_rps, r.accepted, r.requests))?;
    }
    ensure(high.capacity_rps >= 10_000.0, || format!("capacity {:.0} rps", high.capacity_rps))?;
    ensure(high.achieved_rps >= 0.99 * 10_000.0, || format!("achieved {:.0} at 10^4 offered", high.achieved_rps))?;
    let (p_low, p_high) = (low.stage_latency_percentiles.total.p50, high.stage_latency_percentiles.total.p50);
    ensure(p_high <= 2 * p_low, || format!("p50 {p_high} ns at 10^4 vs {p_low} ns at 10^2"))?;
    let s = high.stage_latency_percentiles;
    ensure(s.signature.p50 > s.context.p50 && s.signature.p50 > s.registry.p50, || {
        format!("stage p50 sig {} ctx {} reg {}", s.signature.p50, s.context.p50, s.registry.p50)
    })?;
    Ok(format!(
        "capacity {:.0} rps, achieved {:.0} at 10^4; p50 {:.1}us vs {:.1}us at 10^2; signature p50 {:.1}us > context {:.1}us, registry {:.1}us",
        high.capacity_rps,
        high.achieved_rps,
        p_high as f64 / 1e3,
        p_low as f64 / 1e3,
        s.signature.p50 as f64 / 1e3,
        s.context.p50 as f64 / 1e3,
        s.registry.p50 as f64 / 1e3
    ))
}

async fn storm(mode: Mode) -> Result<(usize, usize), String> {
    let (key, ks) = issuer(8);
    let clock = Arc::new(SystemClock::new());
    let merchant = MockMerchant::default();
    let m_listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let m_addr = m_listener.local_addr().unwrap();
    tokio::spawn(merchant.clone().serve(m_listener));

    let text = format!(
        r#"{{"upstream_url": "http://{m_addr}{FULFILL_PATH}", "keystore_path": "unused", "mode": "{}"}}"#,
        mode.as_str()
    );
    let config = GatewayConfig::from_json(&text, Path::new(".")).map_err(|e| e.to_string())?;
    let gateway = Gateway::new(&config, ks, clock.clone()).map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let url = format!("http://{}/execute", listener.local_addr().unwrap());
    tokio::spawn(gateway.serve(listener, std::future::pending()));

    use ztrv_core::Clock;
    let req = request(&key, "storm".into(), clock.now(), &mut StdRng::seed_from_u64(8));
    let body = serde_json::to_vec(&req).unwrap();
    let client = reqwest::Client::new();
    let sends: Vec<_> = (0..100)
        .map(|_| {
            let (client, url, body) = (client.clone(), url.clone(), body.clone());
            tokio::spawn(async move { client.post(url).body(body).send().await.map(|r| r.status().as_u16()) })
        })
        .collect();
    let mut accepted = 0;
    for s in sends {
        let status = s.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
        if status == 200 {
            accepted += 1;
        } else if status != 403 {
            return Err(format!("unexpected status {status}"));
        }
    }
    Ok((accepted, merchant.count(&req.mandate.mandate_id)))
}

fn gateway_storm() -> Outcome {
    let start = Instant::now();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let (full, base) = rt.block_on(async { Ok::<_, String>((storm(Mode::Full).await?, storm(Mode::Baseline).await?)) })?;
    let secs = start.elapsed().as_secs_f64();
    ensure(full == (1, 1), || format!("full: {} accepted, {} ledger entries", full.0, full.1))?;
    ensure(base == (100, 100), || format!("baseline: {} accepted, {} ledger entries", base.0, base.1))?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("full 1 ledger entry, baseline 100; {secs:.2}s"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 attack-eval interception and false positives", table1),
        ("2 ablation matrix", ablation),
        ("3 ttl sweep plateau", ttl),
        ("4 exactly one accept under concurrency", exactly_one_accept),
        ("5 replay window closure", replay_closure),
        ("6 side-effect isolation", side_effect_isolation),
        ("7 throughput floor and stability", throughput),
        ("8 gateway replay storm", gateway_storm),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
