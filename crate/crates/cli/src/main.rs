use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mep_cli::{cmd_plot, cmd_train, cmd_verify, parse_config, parse_seeds};

#[derive(Parser)]
#[command(name = "mep", version, about = "Train, verify and plot prioritized-replay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and aggregate the learning curves.
    Train(TrainArgs),
    /// Check the entropy and lower-bound inequalities on random instances.
    Verify {
        /// Instances per check.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw success-rate and goal-entropy curves from metrics CSVs.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, short, default_value = "curves.svg")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key: value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// Seed count N (seeds 0..N) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Output directory; defaults to `$MEP_OUT_DIR/<env>_<method>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Print a line per epoch.
    #[arg(long, short)]
    verbose: bool,
}

fn train(args: TrainArgs) -> Result<(), Box<dyn std::error::Error>> {
    let mut overrides = Vec::new();
    for (key, value) in [("env", args.env), ("method", args.method), ("epochs", args.epochs)] {
        if let Some(v) = value {
            overrides.push((key, v));
        }
    }
    let config = parse_config(args.config.as_deref(), &overrides)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![config.seed],
    };
    let out = args.out.unwrap_or_else(|| {
        let root = std::env::var_os("MEP_OUT_DIR").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!("{}_{}", config.env, config.method))
    });
    let outcome = cmd_train(&config, &seeds, &out, args.jobs, args.verbose)?;
    println!("manifest: {}", outcome.manifest_path.display());
    println!("aggregate: {}", outcome.aggregate_csv.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Box<dyn std::error::Error>> = match cli.command {
        Command::Train(args) => train(args),
        Command::Verify { n, seed } => cmd_verify(n, seed).map(|lines| {
            for l in lines {
                println!("{l}");
            }
        }).map_err(Into::into),
        Command::Plot { csv, output } => cmd_plot(&csv, &output).map(|()| {
            println!("wrote {}", output.display());
        }).map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
