use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use openpub::consensus::{inject_tx, run_consensus, LoadFixture, SimConfig, StreamSpec};
use openpub::ledger::{import_chain, Fees, TxClass};
use openpub::pairing::CURVE_ID;
use openpub::vss::Params;
use openpub::workflow::bench::{bench_tibgs, is_pbft_consistent, parse_thresholds, to_csv};
use openpub::workflow::inspect::{inspect, render_text, Query};
use openpub::workflow::scenario::{run_scenario, ScenarioConfig, ScenarioError, GROUP_ID};
use openpub::workflow::system_initialization;

#[derive(Parser)]
#[command(name = "openpub", version, about = "Anonymous peer review on a simulated consortium ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Run system initialization and write validator key files plus a public bundle.
    Keygen {
        /// Scenario file supplying n, f and seed.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "n")]
        k: Option<u32>,
        #[arg(long, requires = "k")]
        n: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = GROUP_ID)]
        grp_id: String,
        #[arg(long, default_value = "keys")]
        out: PathBuf,
    },
    /// Execute a scenario end to end and write chain, event log and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Metrics format; json always written, csv adds metrics.csv.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Wall-clock timings of the eight TIBGS operations per threshold.
    Bench {
        /// e.g. "11,16;15,22" or "11/16,15/22".
        #[arg(long, default_value = "11,16;15,22")]
        thresholds: String,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        setup_iters: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated throughput, latency and block size per threshold and tx class.
    Sweep {
        #[arg(long, default_value = "3,4;5,7")]
        thresholds: String,
        /// Transactions per class and threshold.
        #[arg(long, default_value_t = 600)]
        txs: usize,
        #[arg(long, default_value_t = 5000.0)]
        rate: f64,
        /// Replace the default cost model with one measured on this machine.
        #[arg(long)]
        calibrate: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query an exported chain by tx hash, user id or "height:N".
    Inspect {
        #[arg(long)]
        chain: PathBuf,
        query: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

enum Failure {
    Usage(String),
    Violation(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = check_curve().and_then(|_| match cli.command {
        Command::Keygen {
            config,
            k,
            n,
            seed,
            grp_id,
            out,
        } => keygen(config.as_deref(), k.zip(n), seed, &grp_id, &out),
        Command::Run {
            config,
            seed,
            out,
            format,
        } => run(&config, seed, &out, format),
        Command::Bench {
            thresholds,
            iters,
            setup_iters,
            seed,
            format,
            out,
        } => bench(&thresholds, iters, setup_iters, seed, format, out.as_deref()),
        Command::Sweep {
            thresholds,
            txs,
            rate,
            calibrate,
            seed,
            format,
            out,
        } => sweep(&thresholds, txs, rate, calibrate, seed, format, out.as_deref()),
        Command::Inspect { chain, query, format } => inspect_cmd(&chain, &query, format),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn check_curve() -> Result<(), Failure> {
    match std::env::var("OPENPUB_CURVE") {
        Ok(c) if c != CURVE_ID => Err(usage(format!("OPENPUB_CURVE={c} is not supported; this build uses {CURVE_ID}"))),
        _ => Ok(()),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn keygen(
    config: Option<&Path>,
    kn: Option<(u32, u32)>,
    seed: Option<u64>,
    grp_id: &str,
    out: &Path,
) -> Result<(), Failure> {
    let (params, seed, fees) = match (config, kn) {
        (Some(path), None) => {
            let cfg = load_config(path)?;
            (Params::for_faults(cfg.f), seed.unwrap_or(cfg.seed), cfg.fees)
        }
        (None, Some((k, n))) => {
            let p = Params::new(k, n).map_err(|e| usage(e.to_string()))?;
            (p, seed.ok_or_else(|| usage("--seed is required with --k/--n"))?, Fees::default())
        }
        (Some(_), Some(_)) => return Err(usage("give either --config or --k/--n, not both")),
        (None, None) => return Err(usage("give --config or --k and --n")),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let setup = system_initialization(params.k, params.n, grp_id, fees, &mut rng)
        .map_err(|e| Failure::Violation(format!("system initialization failed: {e}")))?;
    fs::create_dir_all(out)?;
    for v in &setup.validators {
        let mut body = format!(
            "openpub-key v1 curve={CURVE_ID} role=validator k={} n={} id={}\n",
            params.k,
            params.n,
            v.index.get()
        );
        let fields = [
            ("account_sk", hex::encode(v.keypair.secret_bytes())),
            ("account_pk", v.keypair.pk.to_hex()),
            ("msk", hex::encode(v.msk.to_bytes())),
            ("gsk", hex::encode(v.gsk.to_bytes())),
            ("tsk", hex::encode(v.tsk.to_bytes())),
        ];
        for (name, value) in fields {
            writeln!(body, "{name}={value}").expect("string write");
        }
        write(&out.join(format!("validator-{}.key", v.index.get())), &body)?;
    }
    let bundle = json!({
        "format": "openpub-bundle v1",
        "curve": CURVE_ID,
        "k": params.k,
        "n": params.n,
        "grp_id": setup.grp_id,
        "mpk": hex::encode(setup.mpk.to_bytes()),
        "gvks": setup.validators.iter().map(|v| hex::encode(v.gvk.to_bytes())).collect::<Vec<_>>(),
        "acc_pub": hex::encode(setup.tsig.pk.to_bytes()),
        "tsig_public": hex::encode(setup.tsig.to_bytes()),
        "validator_accounts": setup.validators.iter().map(|v| v.keypair.pk.to_hex()).collect::<Vec<_>>(),
    });
    write(
        &out.join("bundle.json"),
        &(serde_json::to_string_pretty(&bundle).expect("serializable") + "\n"),
    )?;
    println!(
        "wrote {} validator key files and bundle.json to {} ({},{})",
        params.n,
        out.display(),
        params.k,
        params.n
    );
    Ok(())
}

fn run(config: &Path, seed: Option<u64>, out: &Path, format: Format) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e @ ScenarioError::Config(_)) => return Err(usage(e.to_string())),
        Err(e) => return Err(Failure::Violation(e.to_string())),
    };
    fs::create_dir_all(out)?;
    write(&out.join("chain.jsonl"), &report.chain_export())?;
    write(&out.join("events.jsonl"), &report.events_jsonl())?;
    write(&out.join("metrics.json"), &(report.metrics.to_json() + "\n"))?;
    if format == Format::Csv {
        write(&out.join("metrics.csv"), &report.metrics.to_csv())?;
    }
    for c in &report.checks {
        println!("{:<26} {}  {}", c.name, if c.holds { "ok" } else { "VIOLATED" }, c.detail);
    }
    println!(
        "{} blocks, {} txs committed; output in {}",
        report.chain.len(),
        report.metrics.committed_txs,
        out.display()
    );
    match report.first_violation() {
        None => Ok(()),
        Some(v) => Err(Failure::Violation(format!("invariant violated: {v}"))),
    }
}

fn checked_thresholds(s: &str) -> Result<Vec<Params>, Failure> {
    let list = parse_thresholds(s).map_err(usage)?;
    if list.is_empty() {
        return Err(usage("empty threshold list"));
    }
    if let Some(p) = list.iter().find(|p| !is_pbft_consistent(**p)) {
        return Err(usage(format!(
            "threshold ({},{}) is not of the form (2f+1, 3f+1)",
            p.k, p.n
        )));
    }
    Ok(list)
}

fn bench(
    thresholds: &str,
    iters: usize,
    setup_iters: usize,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let list = checked_thresholds(thresholds)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for p in list {
        rows.extend(bench_tibgs(p, setup_iters, iters, &mut rng).map_err(|e| Failure::Violation(e.to_string()))?);
    }
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&rows).expect("serializable") + "\n",
        _ => to_csv(&rows),
    };
    emit(out, &text)
}

#[derive(serde::Serialize)]
struct SweepRow {
    k: u32,
    n: u32,
    class: TxClass,
    committed: usize,
    sim_tps: f64,
    sim_mean_latency_us: f64,
    sim_mean_block_bytes: f64,
    sim_mean_consensus_time_us: f64,
}

fn sweep(
    thresholds: &str,
    txs: usize,
    rate: f64,
    calibrate: bool,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let list = checked_thresholds(thresholds)?;
    let mut rows = Vec::new();
    for p in list {
        let f = (p.n - 1) / 3;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fx = LoadFixture::new(f, 4, &mut rng).map_err(|e| Failure::Violation(e.to_string()))?;
        let costs = calibrate.then(|| fx.calibrate(20, &mut rng));
        for class in [TxClass::TxSig, TxClass::TxTsig, TxClass::TxGsig] {
            let stream = inject_tx(&fx, &StreamSpec::only(class, txs, rate), &mut rng);
            let mut cfg = SimConfig::new(f, seed);
            if let Some(c) = costs {
                cfg.costs = c;
            }
            let horizon = 600_000_000;
            let (_, m) = run_consensus(cfg, &fx, &stream, horizon).map_err(|e| usage(e.to_string()))?;
            let summary = m.class(class);
            rows.push(SweepRow {
                k: p.k,
                n: p.n,
                class,
                committed: m.committed_txs,
                sim_tps: m.tps,
                sim_mean_latency_us: summary.map_or(0.0, |s| s.mean_latency_us),
                sim_mean_block_bytes: m.mean_loaded_block_bytes(),
                sim_mean_consensus_time_us: m.mean_consensus_time_us,
            });
        }
    }
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&rows).expect("serializable") + "\n",
        _ => {
            let mut s = String::from(
                "k,n,class,committed,sim_tps,sim_mean_latency_us,sim_mean_block_bytes,sim_mean_consensus_time_us\n",
            );
            for r in &rows {
                writeln!(
                    s,
                    "{},{},{},{},{:.1},{:.0},{:.0},{:.0}",
                    r.k,
                    r.n,
                    r.class.name(),
                    r.committed,
                    r.sim_tps,
                    r.sim_mean_latency_us,
                    r.sim_mean_block_bytes,
                    r.sim_mean_consensus_time_us
                )
                .expect("string write");
            }
            s
        }
    };
    emit(out, &text)
}

fn inspect_cmd(chain: &Path, query: &str, format: Format) -> Result<(), Failure> {
    let file = fs::File::open(chain).map_err(|e| usage(format!("{}: {e}", chain.display())))?;
    let (_, blocks) = import_chain(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", chain.display())))?;
    let found = inspect(&blocks, &Query::parse(query)).map_err(|e| Failure::Violation(e.to_string()))?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&found).expect("serializable")),
        _ => print!("{}", render_text(&found)),
    }
    Ok(())
}
