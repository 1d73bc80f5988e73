use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use gaussian_fisher::config::{parse_config, RunConfig};
use gaussian_fisher::error::Error;
use gaussian_fisher::runner::{convergence, run};
use gaussian_fisher::scenarios::SCENARIOS;
use gaussian_fisher::table::{emit_csv, ResultTable};

#[derive(Parser)]
#[command(
    name = "gaussian-fisher",
    version,
    about = "Fisher information of continuously monitored linear Gaussian systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV path; overrides the configuration. Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write the result table.
    Run(RunArgs),
    /// List built-in scenarios and their parameters.
    ListScenarios,
    /// Run at dt and dt/2 and report the largest relative deviation.
    Convergence(RunArgs),
}

fn load(args: &RunArgs) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Error::Config("--workers: must be at least 1".into()));
        }
    }
    Ok(cfg)
}

fn write_table(table: &ResultTable, path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(p) => emit_csv(table, p),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(table.to_csv().as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ListScenarios => {
            let mut text = String::new();
            for s in SCENARIOS {
                let params: Vec<String> = s.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                text.push_str(&format!(
                    "{}\n  {}\n  parameter: {}  (rates in units of {})\n  params: {}\n  measurements: {}\n",
                    s.name,
                    s.description,
                    s.parameter,
                    s.reference_rate,
                    params.join(", "),
                    s.measurements
                ));
            }
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
        Command::Run(args) => {
            let cfg = load(&args)?;
            let start = Instant::now();
            let table = run(&cfg, args.workers)?;
            eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
            write_table(&table, args.output.as_deref().or(cfg.output.as_deref()))
        }
        Command::Convergence(args) => {
            let cfg = load(&args)?;
            let start = Instant::now();
            let rep = convergence(&cfg, args.workers)?;
            eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
            eprintln!(
                "dt = {} vs {}: max relative deviation {:e} ({} at t = {})",
                rep.dt,
                rep.dt / 2.0,
                rep.max_rel_dev,
                rep.worst_column,
                rep.worst_t
            );
            write_table(&rep.table, args.output.as_deref().or(cfg.output.as_deref()))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::Io(_) => 1,
                e if e.is_numerical() => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
