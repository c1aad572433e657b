//! Experiment driver for the two-scale Lorenz '96 uncertainty pipeline.
//!
//! Every subcommand reads one configuration file, derives all randomness
//! from the master seed, and writes its artifacts plus a manifest under the
//! output root. `suite` chains every stage in dependency order.

mod config;
mod env;
mod error;
mod labels;
mod layout;
mod manifest;
mod stages;
mod table;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::layout::OutDirs;

#[derive(Parser)]
#[command(name = "l96ens", version, about = "Two-scale Lorenz '96 ensemble experiments")]
struct Cli {
    /// Experiment configuration (TOML; a file starting with `{` is parsed
    /// as JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the master seed from the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output root directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Worker threads for parallel sections (default: logical cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Override the ensemble/sensitivity storage stride (output steps per
    /// stored forecast row).
    #[arg(long, global = true, value_name = "STEPS")]
    store_stride: Option<usize>,

    /// Validate the configuration and print the execution plan, then exit.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate the full two-scale system and write the tendency dataset.
    GenData,
    /// Fit the requested closures and write checkpoints.
    Fit,
    /// Long stationary runs: invariant-measure distances per closure.
    Climatology,
    /// Repeated same-state runs isolating each closure's internal noise.
    InternalVariability,
    /// Truth-only perturbed ensembles: pairwise-distance growth curve.
    Sensitivity,
    /// Factorial (and pooled) forecast ensembles for every closure.
    Ensemble,
    /// Variance decomposition of the factorial ensembles.
    Decompose,
    /// Forecast verification metrics per ensemble.
    Skill,
    /// Auto- and cross-correlation structure of model vs truth runs.
    Correlations,
    /// All stages in dependency order.
    Suite,
    /// Aggregate stage outputs into plot-ready summary tables.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Fit => "fit",
            Command::Climatology => "climatology",
            Command::InternalVariability => "internal-variability",
            Command::Sensitivity => "sensitivity",
            Command::Ensemble => "ensemble",
            Command::Decompose => "decompose",
            Command::Skill => "skill",
            Command::Correlations => "correlations",
            Command::Suite => "suite",
            Command::Report => "report",
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <PATH> is required".into()))?;
    let mut cfg = ExperimentConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(stride) = cli.store_stride {
        cfg.ensemble.store_stride = stride;
        cfg.sensitivity.store_stride = stride;
    }
    cfg.validate()?;

    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }

    let dirs = OutDirs::new(&cli.out);
    let resolved = cfg.to_toml()?;
    let config_sha = l96ens::io::sha256_hex(resolved.as_bytes());

    if cli.dry_run {
        print_plan(cli.command, &cfg, &dirs, &config_sha);
        return Ok(());
    }

    std::fs::create_dir_all(&dirs.root)
        .map_err(|e| CliError::Config(format!("creating {}: {e}", dirs.root.display())))?;
    std::fs::write(dirs.root.join("config.resolved.toml"), &resolved)?;

    match cli.command {
        Command::GenData => stages::gen_data::run(&cfg, &dirs, &config_sha),
        Command::Fit => stages::fit::run(&cfg, &dirs, &config_sha),
        Command::Climatology => stages::climatology::run(&cfg, &dirs, &config_sha),
        Command::InternalVariability => {
            stages::internal_variability::run(&cfg, &dirs, &config_sha)
        }
        Command::Sensitivity => stages::sensitivity::run(&cfg, &dirs, &config_sha),
        Command::Ensemble => stages::ensembles::run(&cfg, &dirs, &config_sha),
        Command::Decompose => stages::decompose::run(&cfg, &dirs, &config_sha),
        Command::Skill => stages::skill::run(&cfg, &dirs, &config_sha),
        Command::Correlations => stages::correlations::run(&cfg, &dirs, &config_sha),
        Command::Suite => stages::suite::run(&cfg, &dirs, &config_sha),
        Command::Report => stages::report::run(&cfg, &dirs, &config_sha),
    }
}

fn print_plan(command: Command, cfg: &ExperimentConfig, dirs: &OutDirs, config_sha: &str) {
    println!("command:        {}", command.name());
    println!("output root:    {}", dirs.root.display());
    println!("config sha256:  {config_sha}");
    println!("master seed:    {}", cfg.seed);
    println!(
        "system:         K={} J={} F={} (dt_full={}, dt_reduced={}, dt_out={})",
        cfg.params.k,
        cfg.params.j,
        cfg.params.f,
        cfg.integrator.dt_full,
        cfg.integrator.dt_reduced,
        cfg.integrator.dt_out
    );
    println!(
        "dataset:        {} samples ({} train / {} val)",
        cfg.dataset.n_samples, cfg.dataset.train, cfg.dataset.val
    );
    println!("closures:       {}", cfg.closure.kind);
    println!(
        "climatology:    {} runs x {} MTU ({} flow members x {} MTU)",
        cfg.climatology.runs,
        cfg.climatology.mtu,
        cfg.climatology.flow_members,
        cfg.climatology.flow_mtu
    );
    println!(
        "ensembles:      {} inits x {} perturbations x {} model draws, horizon {} MTU",
        cfg.ensemble.n_init, cfg.ensemble.n_ens, cfg.ensemble.n_model, cfg.ensemble.horizon_mtu
    );
    println!("dry run: nothing executed");
}
