use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use beamsolve_cli::{check_outputs, compare_engines, load_config, run_experiment, write_outputs, CliError, RunOptions};
use beamsolve_core::selftest::run_selftest;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// MU-MIMO weighted sum-rate solver benchmarks.
#[derive(Parser)]
#[command(name = "beamsolve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: one per core).
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        workers: Option<u16>,
        /// Record the extreme eigenvalues of E_k W_k in every row.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Align the mean WSR curves of configs sharing scenario and seed.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        workers: Option<u16>,
    },
    /// Run the built-in property checks.
    Selftest,
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, workers, diagnostics } => {
            let config = load_config(&config)?;
            check_outputs(&config)?;
            let options = RunOptions { workers: workers.map(usize::from), diagnostics };
            let experiment = run_experiment(&config, &options)?;
            write_outputs(&experiment)?;
            let s = &experiment.summary;
            println!(
                "{}: {} on {} channels, L = {}, final WSR {:.6} +/- {:.6} bits/use",
                s.run_id,
                s.engine.as_str(),
                s.num_channels,
                s.iterations,
                s.final_wsr.mean,
                s.final_wsr.std
            );
        }
        Command::Compare { configs, out, workers } => {
            let configs = configs.iter().map(|p| load_config(p)).collect::<Result<Vec<_>, _>>()?;
            let options = RunOptions { workers: workers.map(usize::from), diagnostics: false };
            let table = compare_engines(&configs, &options)?;
            let mut file = File::create(&out).map(BufWriter::new).map_err(|e| CliError::Io { path: out.clone(), source: e })?;
            table
                .write_csv(&mut file)
                .map_err(|e| CliError::Io { path: out.clone(), source: e.into() })?;
            file.flush().map_err(|e| CliError::Io { path: out.clone(), source: e })?;
            println!("{} rows x {} configs -> {}", table.rows(), table.labels.len(), out.display());
        }
        Command::Selftest => {
            let outcomes = run_selftest();
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(CliError::Failed(format!("{failed} of {} checks failed", outcomes.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
