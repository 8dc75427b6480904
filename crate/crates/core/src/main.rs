use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dpdp::cli::{
    cmd_fitness_table, cmd_plan, cmd_run, cmd_validate, CliError, FitnessTableArgs, ModeArg,
    PlanArgs, RunArgs,
};

#[derive(Parser)]
#[command(
    name = "dpdp",
    about = "Dynamic pickup-and-delivery planning with per-agent genetic search",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Weighted,
    Legacy,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one agent's initial plan and print it with its fitness.
    Plan {
        scenario: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Aggregation mode override.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Also write the listing to a file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario to completion, replanning on events.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Write the per-tick trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write run metrics and evolution reports as JSON here.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Write an SVG rendering of the routes here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Evaluate N random feasible plans for one agent.
    FitnessTable {
        scenario: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(short = 'n', long = "count")]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Plan {
            scenario,
            agent,
            seed,
            mode,
            out,
        } => {
            let text = cmd_plan(&PlanArgs {
                scenario,
                agent,
                seed,
                mode: mode.map(|m| match m {
                    Mode::Weighted => ModeArg::Weighted,
                    Mode::Legacy => ModeArg::Legacy,
                }),
                out,
            })?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            scenario,
            seed,
            max_ticks,
            trace,
            results,
            svg,
        } => {
            let (outcome, summary) = cmd_run(&RunArgs {
                scenario,
                seed,
                max_ticks,
                trace,
                results,
                svg,
            })?;
            print!("{summary}");
            if outcome.completed() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: run did not complete: {:?}", outcome.termination);
                Ok(ExitCode::from(2))
            }
        }
        Command::FitnessTable {
            scenario,
            agent,
            count,
            seed,
        } => {
            let text = cmd_fitness_table(&FitnessTableArgs {
                scenario,
                agent,
                count,
                seed,
            })?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let text = cmd_validate(&scenario)?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
