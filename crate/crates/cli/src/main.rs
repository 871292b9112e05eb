use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ackc::scenario::load_scenario;
use ackc::selftest::{check_jacobians, lemma1_test, qp_selftest};
use ackc::simulator::{simulate, write_csv, SimulationError};
use clap::{Parser, Subcommand};
use log::{error, info};

const EXIT_VALIDATION: u8 = 1;
const EXIT_FAULT: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Parser)]
#[command(name = "ackc", version, about = "Adaptive constrained kinematic control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario against its hidden ground truth and log every cycle.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Caps the total number of control cycles.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare analytic Jacobians with central differences on the VS050.
    CheckJacobians {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the QP solver with a projected-gradient oracle.
    QpSelftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomized check that radial steps toward the sphere never move away from it.
    Lemma1Test {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
}

fn write_log(path: &Path, outcome: &ackc::simulator::SimulationOutcome, n: usize, p: usize) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(&mut out, &outcome.rows, n, p)?;
    out.flush()
}

fn run(scenario: &Path, out: &Path, seed: Option<u64>, steps: Option<usize>) -> ExitCode {
    let scenario = match load_scenario(scenario) {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let (n, p) = (scenario.model.dof(), scenario.model.parameter_count());
    let outcome = match simulate(&scenario, seed, steps) {
        Ok(o) => o,
        Err(e @ SimulationError::Setup(_)) | Err(e @ SimulationError::Io(_)) => {
            error!("{e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if let Err(e) = write_log(out, &outcome, n, p) {
        error!("cannot write {}: {e}", out.display());
        return ExitCode::from(EXIT_VALIDATION);
    }
    info!("wrote {} rows to {}", outcome.rows.len(), out.display());
    println!("{}", outcome.summary());
    match &outcome.fault {
        Some((step, e)) => {
            error!("controller fault at step {step}: {e}");
            ExitCode::from(EXIT_FAULT)
        }
        None => ExitCode::SUCCESS,
    }
}

fn selftest_exit(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SELFTEST)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { scenario, out, seed, steps } => run(&scenario, &out, seed, steps),
        Command::CheckJacobians { seed } => {
            let report = check_jacobians(seed, 100);
            println!("{report}");
            selftest_exit(report.passed())
        }
        Command::QpSelftest { seed } => {
            let report = qp_selftest(seed, 1000);
            println!("{report}");
            selftest_exit(report.passed())
        }
        Command::Lemma1Test { trials } => {
            let report = lemma1_test(0, trials);
            println!("{report}");
            selftest_exit(report.passed())
        }
    }
}
