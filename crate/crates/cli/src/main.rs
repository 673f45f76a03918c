//! Command-line front end: dataset generation, training, evaluation,
//! generalization audits, the unseen-region experiment, timing, and curve
//! export. Every command is deterministic given its seed, and commands that
//! assert something exit nonzero when the assertion fails.

mod commands;
mod render;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gridprice",
    about = "Learning-accelerated DC optimal power flow toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample loads around the nominal point, solve each, write JSONL.
    GenData(commands::GenDataArgs),
    /// Train the convex surrogate (or the end-to-end baseline).
    Train(commands::TrainArgs),
    /// Classify predicted dispatches as optimal / feasible / infeasible.
    Eval(commands::EvalArgs),
    /// Check gradient constancy per region and gradient-polytope containment.
    AuditGeneralization(commands::AuditArgs),
    /// Hold out the center price region of a 2-bus load plane and compare
    /// helper-set training, plain training, and the end-to-end baseline.
    UnseenExperiment(commands::UnseenArgs),
    /// Wall-clock comparison of exact solves against surrogate inference.
    Bench(commands::BenchArgs),
    /// Sample the optimal-cost curve along a load ray and export CSV.
    Curve(commands::CurveArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::AuditGeneralization(args) => commands::audit(args),
        Command::UnseenExperiment(args) => commands::unseen(args),
        Command::Bench(args) => commands::bench(args),
        Command::Curve(args) => commands::curve(args),
    };
    match outcome {
        Ok(passed) => {
            if !passed {
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
