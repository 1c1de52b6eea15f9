//! `circnav` command-line front end.
//!
//! Exit status: 0 on success, 2 when the gains fail validation (any failure
//! under `--strict`, otherwise only gains that leave the controller
//! undefined), 1 on any other error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use circnav::analysis::{compute_metrics, estimator_certificate};
use circnav::dynamics::{run, GainPolicy};
use circnav::output::{self, write_artifacts};
use circnav::scenario::{load_scenario, Artifact, Scenario};
use circnav::sweep::{run_sweep, write_sweep_csv};
use circnav::ResetRadiusMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "circnav", version, about = "Range-only circumnavigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its artifacts.
    Run(RunArgs),
    /// Run every point of the scenario's sweep grid and write one CSV.
    Sweep(SweepArgs),
    /// Check the gain conditions only.
    Validate(Common),
    /// Print the estimator Lyapunov certificate as JSON.
    Certificate(CertificateArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a bundled scenario.
    scenario: String,
    /// Reflection radius for the estimator reset.
    #[arg(long, value_enum)]
    reset_mode: Option<ResetMode>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Refuse to run unless every gain condition holds.
    #[arg(long)]
    strict: bool,
    /// Integration step [s].
    #[arg(long)]
    step: Option<f64>,
    /// Simulated duration [s].
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Output prefix; overrides the scenario's `output_prefix`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Output CSV path (default `<output_prefix>_sweep.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct CertificateArgs {
    #[command(flatten)]
    common: Common,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResetMode {
    /// Reflect the range estimate about r_d.
    #[value(alias = "desired")]
    Paper,
    /// Reflect the range estimate about r_a.
    #[value(alias = "aim")]
    Theory,
}

impl From<ResetMode> for ResetRadiusMode {
    fn from(m: ResetMode) -> Self {
        match m {
            ResetMode::Paper => ResetRadiusMode::DesiredRadius,
            ResetMode::Theory => ResetRadiusMode::AimRadius,
        }
    }
}

enum Failure {
    Gains(String),
    Runtime(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut s = load_scenario(&common.scenario)?;
    if let Some(mode) = common.reset_mode {
        s = s.with_reset_mode(mode.into());
    }
    Ok(s)
}

fn load_sim(args: &SimArgs) -> Result<Scenario, Failure> {
    let s = load(&args.common)?;
    let mut overrides = Vec::new();
    if let Some(h) = args.step {
        overrides.push(("simulation.step_size", h));
    }
    if let Some(t) = args.duration {
        overrides.push(("simulation.duration", t));
    }
    if overrides.is_empty() {
        Ok(s)
    } else {
        Ok(s.with_values(&overrides)?)
    }
}

fn policy(strict: bool) -> GainPolicy {
    if strict {
        GainPolicy::Strict
    } else {
        GainPolicy::Permissive
    }
}

/// Gate on the gain report before running anything.
fn check_gains(s: &Scenario, strict: bool) -> CmdResult {
    let report = s.gain_report();
    if report.has_hard_failure() || (strict && !report.pass()) {
        return Err(Failure::Gains(report.to_string()));
    }
    if !report.pass() {
        eprintln!("warning: gain conditions not met, running anyway\n{report}");
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let mut s = load_sim(&args.sim)?;
    check_gains(&s, args.sim.strict)?;
    if s.emit.is_empty() {
        s.emit = [Artifact::TrajectoryCsv, Artifact::EventsCsv, Artifact::MetricsJson].into();
    }
    let config = s.sim_config()?;
    let out = run(&config, policy(args.sim.strict))?;
    let metrics = compute_metrics(&out, &config, s.settling_band);
    let prefix = args.out.unwrap_or_else(|| s.output_prefix.clone());
    for path in write_artifacts(&s, &config, &out, &metrics, &prefix)? {
        eprintln!("wrote {}", path.display());
    }
    output::write_json(io::stdout().lock(), &metrics)?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let s = load_sim(&args.sim)?;
    let rows = run_sweep(&s, policy(args.sim.strict), args.parallel)?;
    let path = args.out.unwrap_or_else(|| {
        let mut name = s.output_prefix.as_os_str().to_owned();
        name.push("_sweep.csv");
        PathBuf::from(name)
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_sweep_csv(BufWriter::new(File::create(&path)?), &s, &rows)?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    eprintln!("wrote {} ({} points, {failed} failed)", path.display(), rows.len());
    Ok(())
}

fn cmd_validate(args: Common) -> CmdResult {
    let report = load(&args)?.gain_report();
    println!("{report}");
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Gains("gain conditions not met".into()))
    }
}

fn cmd_certificate(args: CertificateArgs) -> CmdResult {
    let s = load(&args.common)?;
    let est = s
        .estimator
        .ok_or_else(|| Failure::Runtime("scenario has no [estimator] section".into()))?;
    let config = s.sim_config()?;
    let cert = estimator_certificate(&config.guidance, &est);
    match args.out {
        Some(path) => output::write_json(BufWriter::new(File::create(path)?), &cert)?,
        None => output::write_json(io::stdout().lock(), &cert)?,
    }
    if !cert.valid {
        eprintln!("warning: certificate is not valid (negative margin or indefinite P)");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Certificate(a) => cmd_certificate(a),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Gains(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
