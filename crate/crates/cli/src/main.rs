//! `coco`: run seeded bandit simulations and write CSV/JSON results.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use coco_core::harness::output::{write_eval_csv, write_json, write_trajectory_csv};
use coco_core::harness::summary::compare;
use coco_core::harness::{run_seeds, PolicyKind, PolicySummary, SeedResult, SimConfig, SimOutput};
use coco_core::CocoError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "coco", version, about = "Multi-user bandit simulations with a nonparametric meta-prior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured policy (and its paired oracle) for each seed
    Run(RunArgs),
    /// Run every policy on the same seeds and compare them
    Evaluate(RunArgs),
    /// Check a config file and print it with defaults filled in
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Inclusive seed range `A..B`, or a single seed
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedRange>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Override the config's policy (npm_ts, gids, ind_ts, oracle_ts)
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    update_every: Option<usize>,
}

#[derive(Clone, Copy)]
struct SeedRange(u64, u64);

fn parse_seeds(s: &str) -> Result<SeedRange, String> {
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("bad seed `{v}`: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(format!("empty seed range {a}..{b}"));
            }
            Ok(SeedRange(a, b))
        }
        None => parse(s).map(|a| SeedRange(a, a)),
    }
}

/// Errors that map to the usage exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_config(path: &Path) -> anyhow::Result<SimConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    SimConfig::from_json_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("COCO_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| UsageError(format!("COCO_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    Ok(())
}

fn prepare(args: &RunArgs) -> anyhow::Result<(SimConfig, Vec<u64>)> {
    let mut config = load_config(&args.config)?;
    if let Some(p) = args.policy {
        config.policy = p;
    }
    if let Some(n) = args.update_every {
        config.update_every = n;
    }
    config
        .validate()
        .map_err(|e| UsageError(format!("{}: {e}", args.config.display())))?;
    let seeds = match args.seeds {
        Some(SeedRange(a, b)) => (a..=b).collect(),
        None => vec![config.seed],
    };
    Ok((config, seeds))
}

fn write_seed(dir: &Path, out: &SimOutput) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = BufWriter::new(File::create(dir.join("trajectory.csv"))?);
    write_trajectory_csv(&mut w, out)?;
    let mut w = BufWriter::new(File::create(dir.join("eval.csv"))?);
    write_eval_csv(&mut w, out)?;
    Ok(())
}

fn run_policy(
    config: &SimConfig,
    seeds: &[u64],
    dir: &Path,
) -> anyhow::Result<(PolicySummary, Vec<SeedResult>)> {
    log::info!("running {} over {} seeds", config.policy, seeds.len());
    let outputs = run_seeds(config, seeds)?;
    let mut results = Vec::with_capacity(outputs.len());
    for (seed, out) in &outputs {
        write_seed(&dir.join(format!("seed_{seed}")), out)?;
        results.push(SeedResult::from_output(*seed, out));
    }
    Ok((PolicySummary::of(config.policy, &results), results))
}

fn write_summary(dir: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("summary.json"))?);
    write_json(&mut w, value)?;
    Ok(())
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let (config, seeds) = prepare(args)?;
    let start = Instant::now();
    fs::create_dir_all(&args.out)?;
    let (summary, results) = run_policy(&config, &seeds, &args.out)?;
    write_summary(
        &args.out,
        &json!({
            "config": config,
            "seeds": seeds,
            "update_every": config.update_every,
            "update_every_deviates": config.update_every != 1,
            "policies": { config.policy.name(): summary },
            "per_seed": results,
            "runtime_seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn evaluate(args: &RunArgs) -> anyhow::Result<()> {
    let (config, seeds) = prepare(args)?;
    let start = Instant::now();
    let policies: Vec<PolicyKind> = match args.policy {
        Some(p) => vec![p],
        None => PolicyKind::ALL.to_vec(),
    };
    let mut summaries = serde_json::Map::new();
    let mut per_policy = Vec::new();
    for p in policies {
        let dir = args.out.join(p.name());
        let (summary, results) = run_policy(&config.with_policy(p), &seeds, &dir)?;
        summaries.insert(p.name().to_string(), serde_json::to_value(summary)?);
        per_policy.push((p, results));
    }
    let comparisons = compare(&per_policy);
    write_summary(
        &args.out,
        &json!({
            "config": config,
            "seeds": seeds,
            "update_every": config.update_every,
            "update_every_deviates": config.update_every != 1,
            "policies": summaries,
            "comparisons": comparisons,
            "runtime_seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn validate(path: &Path) -> anyhow::Result<()> {
    let config = load_config(path)?;
    println!("{}", config.to_json_pretty());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(args) => run(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Validate { config } => validate(config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            match e.downcast_ref::<CocoError>() {
                Some(CocoError::Config { .. }) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
                _ => eprintln!("error: {e:#}"),
            }
            ExitCode::from(1)
        }
    }
}
