//! Command-line front end for the tree-tower experiments.
//!
//! Exit codes: 0 when the command and its configured assertions pass,
//! 1 on runtime or assertion failure, 2 on usage or parse errors.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use treetower_cli::config::{parse_seed_list, parse_word_list, ConfigFile, Experiment};
use treetower_cli::{commands, AppError};

#[derive(Parser)]
#[command(name = "treetower", version, about = "Random tree automorphisms, Schreier towers, spectra, and dependency resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw Haar-random portraits and write the portable text format
    Sample(CommonArgs),
    /// Component counts of the subgroup tower per level
    Tower(CommonArgs),
    /// Spectral gaps and Cheeger data of towers of level graphs
    Spectra(CommonArgs),
    /// Density sequences (Hausdorff-dimension estimates) of subgroups
    Hausdorff(CommonArgs),
    /// Dependency-resolution pipeline with the Haar uniformity test
    Resolve(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file mirroring the flags (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label group: sym or cyclic
    #[arg(long)]
    group: Option<String>,
    /// Tree arity d (must match the group degree)
    #[arg(long)]
    arity: Option<usize>,
    /// Free rank m
    #[arg(long)]
    rank: Option<usize>,
    /// Subgroup generator words, comma separated: "x1 x2,x2 x1"
    #[arg(long)]
    words: Option<String>,
    /// Depth / level budget
    #[arg(long)]
    depth: Option<usize>,
    /// Number of resolved sections per component
    #[arg(long = "K")]
    k: Option<usize>,
    /// Truncation depth of the verified sections
    #[arg(long)]
    trunc: Option<usize>,
    /// Comma-separated seed list
    #[arg(long)]
    seeds: Option<String>,
    /// Pipeline sample count (resolve)
    #[arg(long)]
    samples: Option<usize>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (0 = library default)
    #[arg(long)]
    jobs: Option<usize>,
    /// tower only: also export the first seed's subgroup level graphs as
    /// an edge-list CSV (level,origin,target,generator,sign)
    #[arg(long)]
    edges: Option<String>,
}

fn resolve_experiment(args: &CommonArgs) -> Result<Experiment, AppError> {
    let file: ConfigFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::Usage(format!("bad config {}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let seeds = match &args.seeds {
        Some(text) => parse_seed_list(text).map_err(AppError::Usage)?,
        None => file.seeds.unwrap_or_default(),
    };
    let word_texts = match &args.words {
        Some(text) => parse_word_list(text),
        None => file
            .words
            .unwrap_or_else(|| vec!["x1 x2".to_string(), "x2 x1".to_string()]),
    };
    Ok(Experiment {
        group_kind: args.group.clone().or(file.group).unwrap_or_else(|| "cyclic".to_string()),
        arity: args.arity.or(file.arity).unwrap_or(2),
        rank: args.rank.or(file.rank).unwrap_or(2),
        word_texts,
        depth: args.depth.or(file.depth).unwrap_or(8),
        k: args.k.or(file.k).unwrap_or(2),
        trunc: args.trunc.or(file.trunc).unwrap_or(2),
        seeds,
        samples: args.samples.or(file.samples).unwrap_or(1000),
        out: args.out.clone().or(file.out),
        jobs: args.jobs.or(file.jobs).unwrap_or(0),
        edges: args.edges.clone(),
    })
}

fn dispatch(command: &Command) -> Result<bool, AppError> {
    let (args, run): (&CommonArgs, fn(&Experiment) -> Result<bool, AppError>) = match command {
        Command::Sample(a) => (a, commands::sample),
        Command::Tower(a) => (a, commands::tower),
        Command::Spectra(a) => (a, commands::spectra),
        Command::Hausdorff(a) => (a, commands::hausdorff),
        Command::Resolve(a) => (a, commands::resolve),
    };
    let experiment = resolve_experiment(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(experiment.jobs)
        .build()
        .map_err(|e| AppError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| run(&experiment))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
