use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use ztrv_core::{IssuerKey, IssuerKeyFile, Mode, StaticKeystore};
use ztrv_gateway::{load_config, resolve_config_path, Gateway, CONFIG_ENV};
use ztrv_sim::report::write_report;
use ztrv_sim::{ablation_run, attack_eval, throughput_bench, ttl_sweep, EvalParams, ThroughputParams, TtlSweepParams};

use crate::args::{AblationArgs, AttackArgs, AttackEvalArgs, Command, KeygenArgs, Output, ServeArgs, ThroughputArgs, TtlSweepArgs};
use crate::table;

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Serve(a) => serve(a),
        Command::AttackEval(a) => attack_eval_cmd(a),
        Command::Ablation(a) => ablation(a),
        Command::TtlSweep(a) => ttl(a),
        Command::Throughput(a) => throughput(a),
        Command::Keygen(a) => keygen(a),
    }
}

/// Creates `--out` and checks it accepts files before any work starts.
fn prepare_out(output: &Output) -> Result<String, Failure> {
    let dir = &output.out;
    fs::create_dir_all(dir)
        .and_then(|_| {
            let probe = dir.join(".ztrv-write-probe");
            fs::write(&probe, b"")?;
            fs::remove_file(probe)
        })
        .map_err(|e| Failure::Usage(anyhow!("--out {} is not writable: {e}", dir.display())))?;
    Ok(match &output.fixed_name {
        Some(name) if name.is_empty() || name.contains(['/', '\\']) => {
            return Err(Failure::Usage(anyhow!("--fixed-name must be a plain, non-empty file name")))
        }
        Some(name) => name.clone(),
        None => chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(),
    })
}

fn eval_params(a: &AttackArgs) -> EvalParams {
    EvalParams {
        replay_count: a.replay_count,
        concurrency: a.concurrency as usize,
        ..EvalParams::new(a.n, a.seed)
    }
}

fn written(paths: (PathBuf, PathBuf)) {
    println!("\nwrote {}\nwrote {}", paths.0.display(), paths.1.display());
}

fn attack_eval_cmd(a: AttackEvalArgs) -> Result<(), Failure> {
    let name = prepare_out(&a.output)?;
    let eval = attack_eval(a.mode.into(), &eval_params(&a.attack));
    print!("{}", table::attack_eval(&eval, a.attack.n));
    let paths = write_report(&a.output.out, "attack-eval", &name, &eval.scenarios).map_err(Failure::runtime)?;
    written(paths);
    Ok(())
}

fn ablation(a: AblationArgs) -> Result<(), Failure> {
    let name = prepare_out(&a.output)?;
    let matrix = ablation_run(&eval_params(&a.attack));
    print!("{}", table::ablation(&matrix));
    let paths = write_report(&a.output.out, "ablation", &name, &matrix.reports).map_err(Failure::runtime)?;
    written(paths);
    Ok(())
}

fn ttl(a: TtlSweepArgs) -> Result<(), Failure> {
    let name = prepare_out(&a.output)?;
    let rows = ttl_sweep(&TtlSweepParams {
        windows: a.windows.iter().map(|s| Duration::from_secs(*s)).collect(),
        rate: a.rate,
        duration: Duration::from_secs(a.duration),
        seed: a.seed,
        ..TtlSweepParams::default()
    });
    print!("{}", table::ttl(&rows));
    let paths = write_report(&a.output.out, "ttl-sweep", &name, &rows).map_err(Failure::runtime)?;
    written(paths);
    Ok(())
}

fn throughput(a: ThroughputArgs) -> Result<(), Failure> {
    let name = prepare_out(&a.output)?;
    let rows = throughput_bench(&ThroughputParams {
        rates: a.rates.clone(),
        duration: Duration::from_secs(a.duration),
        concurrency: a.concurrency as usize,
        seed: a.seed,
    });
    print!("{}", table::throughput(&rows));
    let paths = write_report(&a.output.out, "throughput", &name, &rows).map_err(Failure::runtime)?;
    written(paths);
    Ok(())
}

fn keygen(a: KeygenArgs) -> Result<(), Failure> {
    let key = IssuerKey::generate(a.key_id.clone(), &mut rand::thread_rng());
    let keystore = StaticKeystore::new().with_key(a.key_id.clone(), key.public_key());
    let issuer_out = a.issuer_out.clone().unwrap_or_else(|| issuer_path(&a.out));
    let issuer_json = serde_json::to_string_pretty(&IssuerKeyFile::from_key(&key)).map_err(Failure::runtime)?;
    for (path, text) in [(&a.out, keystore.to_json()), (&issuer_out, issuer_json)] {
        fs::write(path, text + "\n")
            .map_err(|e| Failure::Usage(anyhow!("cannot write {}: {e}", path.display())))?;
    }
    println!("key id   {}\nkeystore {}\nissuer   {}", a.key_id, a.out.display(), issuer_out.display());
    Ok(())
}

fn issuer_path(keystore: &Path) -> PathBuf {
    let stem = keystore.file_stem().and_then(|s| s.to_str()).unwrap_or("keys");
    keystore.with_file_name(format!("{stem}.issuer.json"))
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let path = resolve_config_path(a.config, std::env::var_os(CONFIG_ENV))
        .ok_or_else(|| Failure::Usage(anyhow!("no config: pass --config or set {CONFIG_ENV}")))?;
    let config = load_config(&path).map_err(Failure::runtime)?;
    let gateway = Gateway::from_config(&config).map_err(Failure::runtime)?;
    let mode: Mode = config.verifier.mode;

    let runtime = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen_address)
            .await
            .with_context(|| format!("binding {}", config.listen_address))?;
        println!(
            "ztrv gateway listening on {} (mode {}, upstream {})",
            listener.local_addr()?,
            mode.as_str(),
            config.upstream_url
        );
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        gateway.serve(listener, shutdown).await?;
        Ok::<_, anyhow::Error>(())
    })
    .map_err(Failure::Runtime)
}
