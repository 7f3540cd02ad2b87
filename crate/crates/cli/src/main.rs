use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use srpo_lab::output::{csv_bytes, write_atomic};
use srpo_lab::{Experiment, RunConfig, RunManifest};

#[derive(Parser)]
#[command(name = "srpo-lab", version, about = "Run seeded SRPO experiments on tabular HiP-MDP families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory, replacing the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Exact optimal values and greedy policies of every member.
    Solve(RunArgs),
    /// Occupancy of each member's optimal policy.
    Occupancy(RunArgs),
    TrainSrpo(RunArgs),
    TrainBaseline(RunArgs),
    TrainBehaviorReg(RunArgs),
    /// Check the value-gap, occupancy, performance and Wasserstein bounds on member pairs.
    VerifyTheory(RunArgs),
    /// Compare state and action densities of the members' optimal policies.
    Density(RunArgs),
    /// Mean ± std per configuration and a paired SRPO table from training manifests.
    Summarize {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// Write summary.csv and paired.csv here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(experiment: Experiment, args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    match cfg.experiment {
        Some(e) if e != experiment => {
            bail!("config sets experiment = \"{e}\" but the subcommand is {experiment}")
        }
        _ => cfg.experiment = Some(experiment),
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_config(experiment, args)?;
    let manifest = srpo_lab::run(&cfg, args.parallel)?;
    let manifest_path = cfg.output_dir.join(srpo_lab::manifest::MANIFEST_FILE);
    println!("{}", manifest_path.display());
    if manifest.all_ok() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed seeds: {:?}", manifest.failed_seeds());
        Ok(ExitCode::from(1))
    }
}

fn summarize(paths: &[PathBuf], out: Option<&PathBuf>) -> Result<ExitCode> {
    let manifests = paths.iter().map(|p| RunManifest::load(p)).collect::<Result<Vec<_>>>()?;
    let summary = srpo_lab::summarize(&manifests)?;
    let configs = csv_bytes(&summary.configs)?;
    let paired = csv_bytes(&summary.paired)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_atomic(&dir.join("summary.csv"), &configs)?;
            write_atomic(&dir.join("paired.csv"), &paired)?;
        }
        None => {
            print!("{}", String::from_utf8_lossy(&configs));
            if !summary.paired.is_empty() {
                println!();
                print!("{}", String::from_utf8_lossy(&paired));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRPO_LAB_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => run(Experiment::Solve, a),
        Command::Occupancy(a) => run(Experiment::Occupancy, a),
        Command::TrainSrpo(a) => run(Experiment::TrainSrpo, a),
        Command::TrainBaseline(a) => run(Experiment::TrainBaseline, a),
        Command::TrainBehaviorReg(a) => run(Experiment::TrainBehaviorReg, a),
        Command::VerifyTheory(a) => run(Experiment::VerifyTheory, a),
        Command::Density(a) => run(Experiment::Density, a),
        Command::Summarize { manifests, out } => summarize(manifests, out.as_ref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
