use clap::{Parser, Subcommand};
use sld_forge::Execution;
use sld_forge_cli::commands::compare::{compare, summary_table, CompareRequest};
use sld_forge_cli::commands::{run, sweep, validate};
use sld_forge_cli::scenario::output_root;
use sld_forge_cli::{CliError, Scenario};
use std::path::PathBuf;
use std::process::ExitCode;

/// SLD coefficients and quantum Fisher information for a damped oscillator.
///
/// Exit codes: 0 success, 1 comparison outside tolerance, 2 schema or
/// usage error, 3 solver failure, 4 oracle invariant breach.
#[derive(Parser)]
#[command(name = "sld-forge", version)]
struct Cli {
    /// Disable data parallelism inside a run.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write moments, coefficients and QFI as CSV.
    Run {
        scenario: PathBuf,
        /// Also write oracle diagnostics at `oracle.times`.
        #[arg(long)]
        with_oracle: bool,
    },
    /// Compare against the Fock-space oracle; one JSON report per probe time.
    Compare {
        scenario: PathBuf,
        /// Probe times, comma separated; `inf` probes the stationary state.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Truncation ladder; without values uses `oracle.ladder`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        ladder: Option<Vec<usize>>,
    },
    /// Print resolved parameters, regime ratios and a runtime estimate.
    Validate { scenario: PathBuf },
    /// Run every scenario in a directory, each into `<root>/<stem>`.
    Sweep {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mode = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let root = output_root();
    match cli.command {
        Command::Run {
            scenario,
            with_oracle,
        } => {
            let s = Scenario::load(&scenario)?;
            let out = run::run(&s, &s.output_dir(&root), mode, with_oracle)?;
            println!(
                "{}: {} samples -> {}",
                s.name,
                out.samples,
                out.dir.display()
            );
        }
        Command::Compare {
            scenario,
            times,
            ladder,
        } => {
            let s = Scenario::load(&scenario)?;
            let request = CompareRequest::new(&s, times, ladder, mode)?;
            let out = compare(&s, &request, &s.output_dir(&root))?;
            print!("{}", summary_table(&out));
            let failed = out.failures();
            if failed > 0 {
                return Err(CliError::OutOfTolerance {
                    failed,
                    total: out.total(),
                });
            }
        }
        Command::Validate { scenario } => {
            let s = Scenario::read(&scenario)?;
            let (report, checked) = validate::validate(&s);
            print!("{}", report.text);
            checked?;
        }
        Command::Sweep { dir, jobs } => {
            let entries = sweep::sweep(&dir, &root, jobs)?;
            let mut failed = Vec::new();
            for e in &entries {
                match &e.result {
                    Ok(o) => println!(
                        "{}: ok, {} samples -> {}",
                        e.scenario.display(),
                        o.samples,
                        o.dir.display()
                    ),
                    Err(err) => {
                        println!("{}: exit {}: {err}", e.scenario.display(), err.exit_code());
                        failed.push(err.exit_code());
                    }
                }
            }
            if let Some(&code) = failed.iter().max() {
                return Err(CliError::Sweep {
                    failed: failed.len(),
                    total: entries.len(),
                    code,
                });
            }
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
