use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ferrosolve::error::{Error, Result, Violation};
use ferrosolve::scenario::{parse_scenario, Scenario};
use ferrosolve::sim;

#[derive(Parser)]
#[command(name = "ferrosolve", version, about = "Quasi-static ferroelectric evolution solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Run even when neither existence regime covers the configuration.
    #[arg(long)]
    override_coercivity: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one Rothe level and write trajectory, ledger and field snapshots.
    Run {
        #[command(flatten)]
        common: Common,
        /// Rothe level m (2^m steps); defaults to time.level.
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve levels m0..m1 and write the refinement and Young-measure reports.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Inclusive level range `m0..m1`; defaults to time.levels.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print static certificates of the material and potentials.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Validation(vec![Violation::new("levels", format!("expected m0..m1, got {s:?}"))]);
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let m0 = a.trim().parse().map_err(|_| bad())?;
    let m1 = b.trim().parse().map_err(|_| bad())?;
    Ok((m0, m1))
}

fn load(common: &Common) -> Result<Scenario> {
    let scenario = parse_scenario(&common.scenario)?;
    if let Some(warning) = sim::coercivity_gate(&scenario, common.override_coercivity)? {
        eprintln!("{warning}");
    }
    Ok(scenario)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, level, out } => {
            let scenario = load(&common)?;
            let level = level.unwrap_or(scenario.config.time.level);
            let summary = sim::cmd_run(&scenario, level, &out)?;
            println!("{summary}");
        }
        Command::Converge { common, levels, out } => {
            let scenario = load(&common)?;
            let (m0, m1) = match levels {
                Some(s) => parse_levels(&s)?,
                None => (scenario.config.time.levels[0], scenario.config.time.levels[1]),
            };
            let summary = sim::cmd_converge(&scenario, m0, m1, &out)?;
            println!("{summary}");
        }
        Command::Check { common } => {
            let scenario = parse_scenario(&common.scenario)?;
            if let Some(warning) = sim::coercivity_gate(&scenario, true)? {
                eprintln!("{warning}");
            }
            println!("{}", sim::check(&scenario)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("FERROSOLVE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("FERROSOLVE_THREADS ignored: {e}");
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
