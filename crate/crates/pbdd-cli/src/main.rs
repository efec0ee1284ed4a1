//! Command-line front end: scenario generation, engine runs with trace and
//! manifest output, and file-based verification of finished runs.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
//! 4 verification failure.

mod files;
mod generate;
mod run;
mod verify;

use clap::{Parser, Subcommand};

use pbdd::Error;

#[derive(Parser)]
#[command(name = "pbdd", version, about = "Partitioned dual decomposition over a network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as JSON.
    Generate(generate::GenerateArgs),
    /// Run an engine over an instance, writing a trace CSV and a manifest.
    Run(run::RunArgs),
    /// Check a finished trace against the instance and its centralized solution.
    Verify(verify::VerifyArgs),
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Generate(args) => generate::generate(&args).map(|()| 0),
        Command::Run(args) => run::run(&args).map(|()| 0),
        Command::Verify(args) => verify::verify(&args),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SolverFailure { .. }
        | Error::ProjectionFailure { .. }
        | Error::OracleFailure { .. }
        | Error::SingularGram { .. } => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
