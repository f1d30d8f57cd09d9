use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use cmdp_harness::presets::{preset, PRESETS};
use cmdp_harness::{execute, ConfigError, ExperimentConfig, HarnessError};

/// Runs constrained-MDP experiments from TOML configs and writes CSV/JSON
/// artifacts. Exit status: 0 success, 2 configuration error, 3 a check
/// failed, 1 any other error.
#[derive(Parser)]
#[command(name = "cmdp-harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel evaluators.
    #[arg(long, env = "CMDP_PD_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct PresetArgs {
    /// Use this config instead of the bundled one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Exact LP optimum of the two-product inventory instance.
    OracleCheck(PresetArgs),
    /// Sampled primal-dual runs on the inventory instance, with rate fits.
    Inventory(PresetArgs),
    /// Measured violation and gap against the convergence bounds.
    TheoremCheck(PresetArgs),
    /// Randomized property suites.
    Invariants(PresetArgs),
    /// Tenfold smaller scheduling system against both benchmarks.
    QueueScaled(PresetArgs),
    /// Full-size scheduling study (hours; must be enabled in the config).
    QueueFull(PresetArgs),
    /// Decomposed and joint runs agree iteration by iteration.
    DecompositionCheck(PresetArgs),
    /// Primal-dual on a random instance against its LP optimum.
    RandomCmdp(PresetArgs),
    /// Print a bundled config.
    ShowPreset { name: String },
}

fn config_failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!("{}", Cli::command().render_usage());
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, path, common) = match cli.command {
        Command::Run { config, common } => ("run", Some(config), common),
        Command::ShowPreset { name } => {
            return match PRESETS.iter().find(|(n, _, _)| *n == name) {
                Some((_, _, text)) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                None => config_failure(format!("no preset named `{name}`")),
            };
        }
        Command::OracleCheck(a) => ("oracle-check", a.config, a.common),
        Command::Inventory(a) => ("inventory", a.config, a.common),
        Command::TheoremCheck(a) => ("theorem-check", a.config, a.common),
        Command::Invariants(a) => ("invariants", a.config, a.common),
        Command::QueueScaled(a) => ("queue-scaled", a.config, a.common),
        Command::QueueFull(a) => ("queue-full", a.config, a.common),
        Command::DecompositionCheck(a) => ("decomposition-check", a.config, a.common),
        Command::RandomCmdp(a) => ("random-cmdp", a.config, a.common),
    };

    let loaded: Result<ExperimentConfig, ConfigError> = match &path {
        Some(p) => ExperimentConfig::load(p),
        None => preset(name).expect("every subcommand has a preset"),
    };
    let mut cfg = match loaded {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    if name != "run" {
        let expected = preset(name).expect("preset exists").expect("bundled presets parse").experiment;
        if cfg.experiment != expected {
            return config_failure(format!(
                "`{name}` expects a `{}` config, got `{}`",
                expected.name(),
                cfg.experiment.name()
            ));
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.workers {
        if n == 0 {
            return config_failure("--workers must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    let out = common
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(if name == "run" { cfg.experiment.name() } else { name }));

    let started = std::time::Instant::now();
    let report = match execute(&cfg) {
        Ok(r) => r,
        Err(e @ (HarnessError::Config(_) | HarnessError::Gated(_))) => return config_failure(e),
        Err(e) => {
            eprintln!("error: {} experiment failed: {e}", cfg.experiment.name());
            return ExitCode::from(1);
        }
    };
    if let Err(e) = report.write_to(&out) {
        eprintln!("error: writing to {}: {e}", out.display());
        return ExitCode::from(1);
    }
    for c in &report.checks {
        println!("{c}");
    }
    eprintln!(
        "{} (seed {}) finished in {:.1}s; artifacts in {}",
        cfg.experiment.name(),
        cfg.seed,
        started.elapsed().as_secs_f64(),
        out.display()
    );
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} check(s) failed", report.failures().count());
        ExitCode::from(3)
    }
}
