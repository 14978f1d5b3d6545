//! Command-line front end for the `resilient-p2p` simulator.
//!
//! [`run`] is the whole program; `main` only forwards process arguments and
//! streams to it, so tests drive the CLI in-process.

pub mod bench;
pub mod manifest;
pub mod overrides;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use resilient_p2p::simulator::Setup;
use resilient_p2p::verification::{lemma1_suite, theorem1_suite, weights_suite};
use resilient_p2p::{CheckReport, Error, SimConfig, Simulation};
use serde_json::{json, Value};

use crate::manifest::{Outputs, RunManifest, MANIFEST_FILE, METRICS_FILE, SUMMARY_FILE};

/// Environment variable fixing the worker thread count.
pub const THREADS_ENV: &str = "P2P_SIM_THREADS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "p2p-sim", version, about = "Peer-to-peer learning with adaptive aggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation and write metrics.csv, summary.csv and manifest.json.
    Run {
        /// Config or manifest JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Dotted `key=value` overrides, e.g. `attack.kind=sign_flip`.
        overrides: Vec<String>,
    },
    /// Run numerical checks of the aggregation guarantees and print a JSON report.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time one adaptive aggregation over a grid of model and neighbourhood sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 4000])]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16])]
        nk: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        repeats: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the per-worker partition a config resolves to, as JSON.
    PartitionInfo {
        #[arg(long)]
        config: PathBuf,
        overrides: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Lemma1,
    Weights,
    Theorem1,
    All,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILURE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

/// 2 for errors a user fixes by editing the config, 1 for everything else.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. }
        | Error::Json(_)
        | Error::InvalidTopology(_)
        | Error::ConnectivityFailure { .. }
        | Error::Ingestion { .. }
        | Error::InvalidDataset(_)
        | Error::Partition(_)
        | Error::RuleInfeasible(_)
        | Error::AttackInfeasible(_) => EXIT_USAGE,
        Error::Simulation { source, .. } => exit_code(source),
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{text}");
            return e.exit_code().clamp(0, 255) as u8;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, Failure> {
    match command {
        Command::Run { config, overrides } => run_command(&config, &overrides, out, err),
        Command::Verify { suite, trials, seed } => verify_command(suite, trials, seed, out),
        Command::Bench { d, nk, repeats, out: dest } => bench_command(&d, &nk, repeats, dest.as_deref(), out),
        Command::PartitionInfo { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let setup = cfg.build()?;
            let info = json!({
                "workers": setup.workers.len(),
                "adversaries": setup.adversary_count(),
                "dim": setup.spec.dim(),
                "classes": setup.dataset.class_count(),
                "features": setup.dataset.n_features(),
                "partition": setup.summary(),
            });
            emit_json(out, &info)?;
            Ok(EXIT_OK)
        }
    }
}

/// Reads a config or manifest, applies overrides and validates.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<SimConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let mut doc = manifest::config_document(doc);
    for raw in overrides {
        overrides::apply(&mut doc, raw).map_err(Failure::usage)?;
    }
    let mut cfg: SimConfig = serde_json::from_value(doc)
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        if n == 0 {
            return Err(Failure::usage(format!("{THREADS_ENV} must be at least 1")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::runtime(e.to_string()))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn run_command(config: &Path, overrides: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, Failure> {
    let cfg = load_config(config, overrides)?;
    let setup: Setup = cfg.build()?;
    let started_at = now();
    let _ = writeln!(
        err,
        "running {} workers ({} adversarial) for {} epochs, seed {}",
        setup.workers.len(),
        setup.adversary_count(),
        setup.epochs,
        setup.seed
    );
    let sim = Simulation::new(setup)?;
    let log = thread_pool()?.install(|| sim.run())?;

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let outputs = Outputs {
        metrics: dir.join(METRICS_FILE),
        summary: dir.join(SUMMARY_FILE),
        manifest: dir.join(MANIFEST_FILE),
    };
    log.write_worker_csv(create(&outputs.metrics)?)?;
    log.write_summary_csv(create(&outputs.summary)?)?;
    let manifest = RunManifest {
        version: manifest::version(),
        seed: cfg.seed,
        config: cfg.clone(),
        overrides: overrides.to_vec(),
        started_at,
        finished_at: now(),
        outputs: outputs.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::runtime(e.to_string()))?;
    fs::write(&outputs.manifest, text + "\n")
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", outputs.manifest.display())))?;

    if let Some(last) = log.last() {
        let _ = writeln!(
            out,
            "epoch {}: worst normal accuracy {:.4}, max normal risk {:.4}, adversarial admissions {}",
            last.epoch, last.worst_normal_acc, last.max_normal_risk, last.adversarial_admissions
        );
    }
    let _ = writeln!(out, "wrote {}", dir.display());
    Ok(EXIT_OK)
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", path.display())))
}

fn emit_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Failure::runtime(e.to_string()))
}

/// Runs the requested suites.
pub fn verify(suite: Suite, trials: usize, seed: u64) -> resilient_p2p::Result<Vec<CheckReport>> {
    Ok(match suite {
        Suite::Lemma1 => vec![lemma1_suite(trials, seed)?],
        Suite::Weights => vec![weights_suite(trials, seed)?],
        Suite::Theorem1 => vec![theorem1_suite(trials, seed)?],
        Suite::All => vec![
            lemma1_suite(trials, seed)?,
            weights_suite(trials, seed)?,
            theorem1_suite(trials, seed)?,
        ],
    })
}

fn verify_command(suite: Suite, trials: usize, seed: u64, out: &mut dyn Write) -> Result<u8, Failure> {
    if trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    let reports = verify(suite, trials, seed)?;
    let pass = reports.iter().all(|r| r.pass);
    if suite == Suite::All {
        let max_violation = reports.iter().map(|r| r.max_violation).fold(0.0, f64::max);
        emit_json(
            out,
            &json!({
                "suite": "all",
                "trials": trials,
                "max_violation": max_violation,
                "pass": pass,
                "reports": reports,
            }),
        )?;
    } else {
        emit_json(out, &reports[0])?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}

fn bench_command(
    d: &[usize],
    nk: &[usize],
    repeats: usize,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8, Failure> {
    if d.is_empty() || nk.is_empty() || d.contains(&0) || nk.contains(&0) {
        return Err(Failure::usage("--d and --nk need positive values"));
    }
    let rows = bench::grid(d, nk, repeats)?;
    let mut text = String::from("d,nk,mean_ns\n");
    for r in &rows {
        text.push_str(&format!("{},{},{:.1}\n", r.d, r.nk, r.mean_ns));
    }
    match dest {
        Some(path) => {
            fs::write(path, &text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?
        }
        None => out.write_all(text.as_bytes()).map_err(|e| Failure::runtime(e.to_string()))?,
    }
    Ok(EXIT_OK)
}
