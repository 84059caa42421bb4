use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hexaland::config::{load_scenario, read_table};
use hexaland::runner::{run_to_dir, Schedule, REPORT_FILE};
use hexaland::sweep::{sweep, write_csv, SweepSpec};
use hexaland::{table, HarnessError, Result};
use hexaland_core::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "hexaland",
    version,
    about = "Fault-tolerant hexarotor landing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, writing CSV logs and report.json.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's output.directory, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the flight and vision computers on separate threads.
        #[arg(long)]
        threaded: bool,
    },
    /// Validate a scenario file without running it.
    Check { scenario: PathBuf },
    /// Print the rotor-failure reconfiguration table as CSV.
    Table {
        /// Vehicle to use (default: built-in defaults).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Include servo slots that are not fitted.
        #[arg(long)]
        all_slots: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over many seeds and/or parameter values; CSV summary.
    Sweep {
        scenario: PathBuf,
        /// Dotted parameter key, e.g. landing.descent_speed.
        #[arg(long, requires = "values")]
        param: Option<String>,
        /// Comma-separated TOML values for the parameter.
        #[arg(long, value_delimiter = ',', requires = "param")]
        values: Vec<String>,
        /// Seed range `a..b`, or `n` for `0..n`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Range<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(text: &str) -> std::result::Result<Range<u64>, String> {
    let bad = |_| format!("expected `a..b` or `n`, got `{text}`");
    match text.split_once("..") {
        Some((a, b)) => Ok(a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?),
        None => Ok(0..text.trim().parse().map_err(bad)?),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            HarnessError::Io {
                path: p.to_owned(),
                source: e,
            }
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn default_out(scenario: &Scenario) -> PathBuf {
    match &scenario.output.directory {
        Some(d) => PathBuf::from(d),
        None => Path::new("out").join(&scenario.name),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{v:.3}"))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            threaded,
        } => {
            let scn = load_scenario(&scenario)?;
            let dir = out.unwrap_or_else(|| default_out(&scn));
            let schedule = if threaded {
                Schedule::Threaded
            } else {
                Schedule::Sequential
            };
            let r = run_to_dir(&scn, &dir, schedule)?.report;
            println!(
                "{}: seed {} phase {} at t={:.3}s touchdown_error={} detection_latency={} identified={} recovery={}",
                r.name,
                r.seed,
                r.final_phase.as_str(),
                r.final_time,
                opt(r.touchdown_error),
                opt(r.detection_latency),
                r.believed_state,
                opt(r.recovery_time),
            );
            println!("logs and {REPORT_FILE} in {}", dir.display());
        }
        Command::Check { scenario } => {
            let scn = load_scenario(&scenario)?;
            println!(
                "ok: {} (schema {}, seed {})",
                scn.name,
                scn.schema_version,
                scn.seed()
            );
        }
        Command::Table {
            scenario,
            all_slots,
            out,
        } => {
            let scn = match scenario {
                Some(p) => load_scenario(&p)?,
                None => Scenario::seeded(0),
            };
            table::write_csv(
                &table::reconfig_entries(&scn, all_slots)?,
                output(out.as_deref())?,
            )?;
        }
        Command::Sweep {
            scenario,
            param,
            values,
            seeds,
            out,
        } => {
            let base = read_table(&scenario)?;
            let runs = sweep(
                &base,
                &SweepSpec {
                    param,
                    values,
                    seeds,
                },
            )?;
            write_csv(&runs, output(out.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
