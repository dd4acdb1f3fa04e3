//! `adamb` command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::formats::{read_csv, read_json, OracleFile, PartitionDump};
use crate::harness::{load_or_build_oracle, run_experiment, CellResult, Summary};

#[derive(Debug, Parser)]
#[command(name = "adamb", version, about = "Adaptive model-based RL experiments")]
pub struct Cli {
    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a sweep and write CSVs, partition dumps and a summary.
    Run(RunArgs),
    /// Build (or reuse) the cached optimal value oracle and print V*_1.
    Oracle(ConfigArgs),
    /// Describe a CSV, partition dump, oracle, cell or summary file.
    Inspect { path: PathBuf },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON experiment config.
    #[arg(short, long)]
    pub config: PathBuf,
    /// `key=value` on a dotted path, e.g. `env.alpha=0.5`.
    #[arg(short = 'o', long = "override")]
    pub overrides: Vec<String>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Worker threads (defaults to the number of cores).
    #[arg(short, long)]
    pub workers: Option<usize>,
}

pub fn init_logging(quiet: bool, verbose: u8) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Inspect { path } => cmd_inspect(path),
    }
}

fn cmd_run(args: &RunArgs, quiet: bool) -> Result<()> {
    let cfg = load(&args.config)?;
    let run = run_experiment(&cfg, args.workers)?;
    if !quiet {
        println!("V*_1 = {:.4}", run.summary.v_star_1);
        for g in &run.summary.groups {
            let sizes: Vec<String> = g
                .final_partition_sizes
                .iter()
                .map(|s| format!("{s:.1}"))
                .collect();
            println!(
                "{}{} scale={}: cum regret {:.2} ± {:.2}, final partition sizes [{}]",
                g.agent,
                g.epsilon.map(|e| format!(" eps={e}")).unwrap_or_default(),
                g.bonus_scale,
                g.cum_regret.mean,
                g.cum_regret.ci,
                sizes.join(", ")
            );
        }
        println!("summary: {}", run.summary_path.display());
    }
    Ok(())
}

fn cmd_oracle(args: &ConfigArgs) -> Result<()> {
    let cfg = load(args)?;
    let env = cfg.build_env()?;
    let path = cfg.output.join("oracle.json");
    let (oracle, fp) = load_or_build_oracle(&cfg, env.as_ref(), &path)?;
    let start = env.reset(&mut ChaCha8Rng::seed_from_u64(0));
    println!("V*_1({start:?}) = {:.6}", oracle.value(1, &start)?);
    if env.is_deterministic() {
        println!("expectations: exact (deterministic environment)");
    } else {
        println!(
            "expectations: Monte-Carlo estimates, {} draws each",
            cfg.oracle.mc_draws
        );
    }
    println!("oracle {} ({fp})", path.display());
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        let (horizon, rows) = read_csv(path)?;
        let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        seeds.dedup();
        println!(
            "csv: {} rows, H={horizon}, {} seeds",
            rows.len(),
            seeds.len()
        );
        if let Some(last) = rows.last() {
            println!(
                "last row: seed {} episode {} reward {:.4} cum_regret {:.4} partition {:?}",
                last.seed, last.episode, last.reward, last.cum_regret, last.partition_sizes
            );
        }
        return Ok(());
    }
    if let Ok(p) = read_json::<PartitionDump>(path) {
        println!(
            "partition: {} scale={} seed={} after {} episodes",
            p.agent, p.bonus_scale, p.seed, p.episodes
        );
        let bound = p.size_bound();
        let mut ok = true;
        for (i, step) in p.steps.iter().enumerate() {
            let levels: Vec<String> = p
                .level_counts(i)
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(l, &n)| format!("{n} ball{} at level {l}", if n == 1 { "" } else { "s" }))
                .collect();
            let kraft = match p.kraft_is_one(i) {
                Some(true) => "Kraft=1".to_string(),
                Some(false) => {
                    ok = false;
                    "Kraft!=1".to_string()
                }
                None => "Kraft=?".to_string(),
            };
            let deepest = p.level_counts(i).len().saturating_sub(1);
            println!(
                "  h={}: {}, {kraft}, deepest level {deepest}",
                step.h,
                levels.join(", ")
            );
        }
        println!("  storage: {} transition entries", p.storage());
        if p.agent == "adamb" {
            let worst = p.active_counts().into_iter().max().unwrap_or(0);
            let pass = worst as f64 <= bound;
            ok &= pass;
            println!(
                "  size bound {bound:.1}: {} (largest partition {worst})",
                if pass { "PASS" } else { "FAIL" }
            );
        }
        if !ok {
            return Err(crate::error::LabError::parse(
                path,
                "partition invariants violated",
            ));
        }
        return Ok(());
    }
    if let Ok(o) = read_json::<OracleFile>(path) {
        let oracle = o.into_oracle()?;
        println!(
            "oracle: H={}, resolution {}, d_S={}, grid error {:.4}",
            oracle.horizon(),
            oracle.resolution(),
            oracle.state_dim(),
            oracle.grid_error()
        );
        return Ok(());
    }
    if let Ok(c) = read_json::<CellResult>(path) {
        println!(
            "cell {}: {} episodes, final partition size {}",
            c.name(),
            c.rows.len(),
            c.final_partition_size()
        );
        return Ok(());
    }
    let s: Summary = read_json(path)?;
    println!(
        "summary: {} H={} K={} V*_1={:.4}",
        s.env, s.horizon, s.episodes, s.v_star_1
    );
    for g in &s.groups {
        println!(
            "  {}{} scale={}: cum reward {:.2} ± {:.2}, last-window reward {:.4}",
            g.agent,
            g.epsilon.map(|e| format!(" eps={e}")).unwrap_or_default(),
            g.bonus_scale,
            g.cum_reward.mean,
            g.cum_reward.ci,
            g.final_window_reward.mean
        );
    }
    for (agent, scale) in &s.best_scale {
        match s.best_epsilon.get(agent) {
            Some(e) => println!("  best for {agent}: scale {scale}, eps {e}"),
            None => println!("  best scale for {agent}: {scale}"),
        }
    }
    Ok(())
}
