use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use photostereo::config::RunConfig;
use photostereo::evaluate::evaluate;
use photostereo::pipeline::{render, solve, SolveOptions};

#[derive(Parser)]
#[command(name = "photostereo", version, about = "Uncalibrated photometric stereo by inverse rendering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene file into a dataset directory.
    Render { scene: PathBuf, out: PathBuf },
    /// Recover normals, depth, lights and materials from a dataset.
    Solve {
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Total epochs, split 1:2:1 across the three stages.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint written by an earlier solve.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a solve directory against a dataset's ground truth.
    Eval { out: PathBuf, dataset: PathBuf },
}

fn run(cli: Cli) -> photostereo::Result<()> {
    match cli.command {
        Command::Render { scene, out } => render(&scene, &out),
        Command::Solve {
            dataset,
            config,
            out,
            epochs,
            resume,
        } => {
            let config = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let opts = SolveOptions {
                config,
                epochs,
                resume,
            };
            let r = solve(&dataset, &out, &opts)?;
            if let Some(last) = r.history.last() {
                println!("epoch {} loss {:.6}", last.epoch, last.total);
            }
            Ok(())
        }
        Command::Eval { out, dataset } => {
            let rep = evaluate(&out, &dataset)?;
            print!("{}", rep.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
