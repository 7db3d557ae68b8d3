use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nldiff::config::{self, Command, ExperimentConfig, OUTPUT_ENV};
use nldiff::runner::{self, RunOptions};

/// Heterogeneous nonlocal diffusion experiments.
#[derive(Parser)]
#[command(name = "nldiff", version)]
struct Cli {
    /// Output root; overrides the config and NDL_OUT.
    #[arg(long, global = true, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print the full summary as JSON instead of one line.
    #[arg(long, global = true)]
    json_summary: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment file (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Sub {
    /// March the nonlocal equation.
    Simulate(ConfigArg),
    /// March the limiting local equation.
    SimulateLocal(ConfigArg),
    /// March to T and compare with the steady state.
    Steady(ConfigArg),
    /// Closed-form steady state, without marching.
    Predict(ConfigArg),
    /// Focusing-kernel limit study.
    LimitStudy(ConfigArg),
    /// Kernel moments and constants.
    Moments {
        /// gaussian, laplace, quartic, heavy_tail, custom:<path> or all.
        #[arg(long, default_value = "all")]
        kernel: String,
    },
    /// Stratonovich / food-metric equivalence under grid halving.
    StratCheck(ConfigArg),
    /// Compare solutions across kernels.
    Tails(ConfigArg),
    /// Run a shipped preset.
    Preset {
        /// Preset name; omit with --list.
        name: Option<String>,
        #[arg(long)]
        list: bool,
    },
}

fn load(arg: &ConfigArg) -> nldiff::Result<ExperimentConfig> {
    ExperimentConfig::from_file(&arg.config)
}

fn execute(cli: &Cli) -> nldiff::Result<Option<nldiff::Report>> {
    let opts = match &cli.out {
        Some(root) => RunOptions::to(root),
        None => RunOptions::default(),
    };
    let (cfg, command) = match &cli.command {
        Sub::Simulate(a) => (load(a)?, Command::Simulate),
        Sub::SimulateLocal(a) => (load(a)?, Command::SimulateLocal),
        Sub::Steady(a) => (load(a)?, Command::Steady),
        Sub::Predict(a) => (load(a)?, Command::Predict),
        Sub::LimitStudy(a) => (load(a)?, Command::LimitStudy),
        Sub::StratCheck(a) => (load(a)?, Command::StratCheck),
        Sub::Tails(a) => (load(a)?, Command::Tails),
        Sub::Moments { kernel } => {
            let mut cfg = ExperimentConfig::from_toml("run_id = \"moments\"")?;
            cfg.model.kernel = kernel.clone();
            (cfg, Command::Moments)
        }
        Sub::Preset { list: true, .. } => {
            for name in config::preset_names() {
                println!("{name}");
            }
            return Ok(None);
        }
        Sub::Preset { name: None, .. } => {
            return Err(nldiff::Error::InvalidInput("give a preset name or --list".into()));
        }
        Sub::Preset { name: Some(name), .. } => {
            let cfg = config::preset(name)?;
            let command = cfg.command.expect("presets name their command");
            (cfg, command)
        }
    };
    let report = runner::run(&cfg, command, &opts)?;
    if !cli.quiet {
        if cli.json_summary {
            println!("{}", serde_json::to_string_pretty(&report)?);
        } else {
            println!("{} {command}: {}", cfg.run_id, report.summary());
        }
    }
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .init();
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
