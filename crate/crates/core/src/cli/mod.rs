//! Command-line front end: JSON config in, JSON report and CSV series out.

pub mod config;
pub mod pipeline;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::ExperimentConfig;
pub use pipeline::{execute, prepare, rate_table, simulate_coupling, Prepared, RunReport};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DRIFT: i32 = 3;
pub const EXIT_MINORIZATION: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;
pub const EXIT_DOMINANCE: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "subgeom", version, about = "Explicit subgeometric convergence bounds for finite Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline; verification as configured.
    Run(CommonArgs),
    /// Check the drift condition and write the certificate.
    VerifyDrift(CommonArgs),
    /// Write `n, r(n), R(n)` for the configured φ.
    ComputeRate(CommonArgs),
    /// Ingredients and bounds without verification.
    Bound(CommonArgs),
    /// Full pipeline with verification forced on.
    Check(CommonArgs),
    /// Sample coupling times and compare with the exact tail.
    Simulate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DriftFails { .. } | Error::EnlargeSmallSet { .. } => EXIT_DRIFT,
        Error::NotSmall | Error::InvalidMinorization(_) => EXIT_MINORIZATION,
        Error::Divergence(_)
        | Error::Numeric { .. }
        | Error::Unreliable { .. }
        | Error::CapOverflow { .. }
        | Error::NeedsLongerSequence { .. }
        | Error::NonUniqueStationary => EXIT_DIVERGENCE,
        Error::Domain(_)
        | Error::InvalidKernel(_)
        | Error::NotLowerSet
        | Error::NotMonotone { .. }
        | Error::InvalidWeight { .. }
        | Error::Aggregation(_)
        | Error::Config(_)
        | Error::Io(_) => EXIT_CONFIG,
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    exit_code: i32,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a Error>,
}

/// Reads a config, or the config embedded in an earlier report.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let value = match value {
        serde_json::Value::Object(mut map) if !map.contains_key("chain") && map.contains_key("config") => {
            map.remove("config").expect("checked")
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(&cli.command),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn dispatch(command: &Command) -> i32 {
    let args = match command {
        Command::Run(a)
        | Command::VerifyDrift(a)
        | Command::ComputeRate(a)
        | Command::Bound(a)
        | Command::Check(a)
        | Command::Simulate(a) => a,
    };
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("cannot create {}: {e}", args.out.display());
        return EXIT_CONFIG;
    }
    let outcome = match command {
        Command::Run(a) => run_pipeline(a, None),
        Command::Check(a) => run_pipeline(a, Some(true)),
        Command::Bound(a) => run_pipeline(a, Some(false)),
        Command::VerifyDrift(a) => verify_drift(a),
        Command::ComputeRate(a) => compute_rate(a),
        Command::Simulate(a) => simulate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            let record = ErrorRecord {
                exit_code: code,
                message: e.to_string(),
                error: Some(&e),
            };
            if let Err(io) = write_json(&args.out.join("error.json"), &record) {
                eprintln!("cannot write error record: {io}");
            }
            eprintln!("error: {e}");
            code
        }
    }
}

fn run_pipeline(args: &CommonArgs, force_verify: Option<bool>) -> Result<i32> {
    let prep = prepare(load_config(&args.config)?, args.seed)?;
    let verify = force_verify.unwrap_or(prep.config.outputs.verify);
    let report = execute(&prep, verify, Some(&args.out))?;
    write_json(&args.out.join("report.json"), &report)?;
    if !args.quiet {
        for pair in &report.pairs {
            for entry in &pair.bounds {
                print_entry(&format!("({}, {})", pair.x, pair.x_prime), entry);
            }
        }
        for entry in &report.stationary {
            print_entry("stationary", entry);
        }
    }
    if report.all_pass == Some(false) {
        let record = ErrorRecord {
            exit_code: EXIT_DOMINANCE,
            message: "a partial sum exceeds its bound".into(),
            error: None,
        };
        write_json(&args.out.join("error.json"), &record)?;
        return Ok(EXIT_DOMINANCE);
    }
    Ok(EXIT_OK)
}

fn print_entry(label: &str, entry: &pipeline::BoundEntry) {
    let kind = serde_json::to_string(&entry.report.kind).unwrap_or_default();
    match &entry.verdict {
        Some(v) => println!(
            "{label} {kind} bound {:.6e} max partial sum {:.6e} {}",
            entry.report.value,
            v.max_partial_sum,
            if v.pass { "PASS" } else { "FAIL" }
        ),
        None => println!("{label} {kind} bound {:.6e}", entry.report.value),
    }
}

fn verify_drift(args: &CommonArgs) -> Result<i32> {
    let mut config = load_config(&args.config)?;
    if config.v.is_none() {
        return Err(Error::Config("verify-drift needs V".into()));
    }
    config.verify_drift = true;
    let prep = prepare(config, args.seed)?;
    let cert = prep.certificate.as_ref().expect("V given and verification on");
    write_json(&args.out.join("drift.json"), cert)?;
    if !args.quiet {
        println!(
            "drift holds: b = {:.6e}, inf phi(V) off C = {:.6e}, lambda = {:.6e}",
            cert.b, cert.inf_phi_v_off_c, cert.lambda
        );
    }
    Ok(EXIT_OK)
}

fn compute_rate(args: &CommonArgs) -> Result<i32> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let phi = crate::rates::Phi::new(config.phi.clone())?;
    let table = rate_table(&phi, config.rate_horizon)?;
    let mut out = BufWriter::new(fs::File::create(args.out.join("rate.csv"))?);
    writeln!(out, "n,r,R")?;
    for (n, r, big_r) in &table {
        writeln!(out, "{n},{r},{big_r}")?;
    }
    out.flush()?;
    if !args.quiet {
        println!("wrote {} rate terms", table.len());
    }
    Ok(EXIT_OK)
}

fn simulate(args: &CommonArgs) -> Result<i32> {
    let prep = prepare(load_config(&args.config)?, args.seed)?;
    let sim_cfg = prep.config.simulation;
    let mut results = Vec::new();
    for start in prep.start_pairs() {
        let sim = simulate_coupling(&prep, start, sim_cfg.n_paths, sim_cfg.horizon)?;
        let name = format!("coupling_times_{}_{}.csv", start.0, start.1);
        let mut out = BufWriter::new(fs::File::create(args.out.join(name))?);
        writeln!(out, "path,coupling_time,censored")?;
        for (i, t) in sim.times.iter().enumerate() {
            match t {
                Some(t) => writeln!(out, "{i},{t},false")?,
                None => writeln!(out, "{i},{},true", sim.horizon + 1)?,
            }
        }
        out.flush()?;
        if !args.quiet {
            println!(
                "({}, {}) censored {} of {}, identity discrepancy {:.3e}",
                sim.x, sim.x_prime, sim.censored, sim.n_paths, sim.max_identity_discrepancy
            );
        }
        results.push(sim);
    }
    #[derive(Serialize)]
    struct SimulationReport<'a> {
        config: &'a ExperimentConfig,
        simulations: &'a [pipeline::CouplingSimulation],
    }
    write_json(
        &args.out.join("simulation.json"),
        &SimulationReport {
            config: &prep.config,
            simulations: &results,
        },
    )?;
    Ok(EXIT_OK)
}
