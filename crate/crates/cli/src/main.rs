use std::path::PathBuf;

use clap::Parser;

use trivec_cli::commands::{self, Command};
use trivec_cli::config::FileConfig;

/// Within-basket recommendations: train, index, evaluate, serve.
#[derive(Parser, Debug)]
#[command(name = "trivec", version, about)]
struct Cli {
    /// Master seed for every randomized step [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config supplying defaults for unset flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(42);
    match cli.command {
        Command::Ingest(args) => commands::run_ingest(args, &file, seed),
        Command::Train(args) => commands::run_train(args, &file, seed),
        Command::BuildIndex(args) => commands::run_build_index(args, &file, seed),
        Command::Eval(args) => commands::run_eval(args, &file, seed),
        Command::Bench(args) => commands::run_bench(args, &file, seed),
        Command::Recommend(args) => commands::run_recommend(args, &file, seed),
        Command::Serve(args) => commands::run_serve(args, &file, seed),
    }
}
