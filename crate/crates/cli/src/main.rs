use clap::{Parser, Subcommand};

use proscale_cli::commands::{
    cmd_encode, cmd_gradcheck, cmd_plan, cmd_redundancy, cmd_sweep, EncodeArgs, GradcheckArgs,
    PlanArgs, RedundancyArgs, SweepArgs,
};
use proscale_cli::EXIT_VALIDATION;

/// Progressive token-length encoder: cost planning, encoding, and checks.
#[derive(Parser)]
#[command(name = "proscale", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model the MAC cost of one stage configuration against the baseline.
    Plan(PlanArgs),
    /// Model a list of configurations and emit one CSV row each.
    Sweep(SweepArgs),
    /// Run the encoder and write output tensors plus stats.
    Encode(EncodeArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Profile token cosine redundancy per sequence distance.
    Redundancy(RedundancyArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are success; bad flags are validation.
            if e.use_stderr() {
                eprintln!("{}", e);
                std::process::exit(EXIT_VALIDATION);
            }
            print!("{}", e);
            std::process::exit(0);
        }
    };
    let result = match &cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Redundancy(args) => cmd_redundancy(args),
    };
    if let Err(e) = result {
        eprintln!("{}", e);
        std::process::exit(e.exit_code());
    }
}
