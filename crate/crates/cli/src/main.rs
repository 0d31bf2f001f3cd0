use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nonholonomic_cli::{list_scenarios, run_config_file, run_sleigh, CliError, Mode, SleighArgs, EXIT_CONFIG, EXIT_OK};

#[derive(Parser)]
#[command(name = "nonholo", version, about = "Simulate and verify nonholonomic mechanical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the second-order equations from a JSON config.
    Simulate { config: PathBuf },
    /// Integrate the extended Hamiltonian system from a JSON config.
    Hamiltonian { config: PathBuf },
    /// Run a config and print the JSON-lines report.
    Verify { config: PathBuf },
    /// Run a sleigh variant, optionally sweeping k or c.
    Sleigh(SleighArgs),
    /// Print the built-in scenario names.
    ListScenarios,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result: Result<u8, CliError> = match cli.command {
        Command::Simulate { config } => run_config_file(&config, Mode::Simulate, &mut stdout).map(|o| o.exit_code()),
        Command::Hamiltonian { config } => run_config_file(&config, Mode::Hamiltonian, &mut stdout).map(|o| o.exit_code()),
        Command::Verify { config } => run_config_file(&config, Mode::Verify, &mut stdout).map(|o| o.exit_code()),
        Command::Sleigh(args) => run_sleigh(&args, &mut stdout),
        Command::ListScenarios => {
            list_scenarios(&mut stdout).map(|_| EXIT_OK).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    };
    let _ = stdout.flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
