use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scdetect::config::{parse_gamma_list, parse_u64, ExperimentConfig, Gamma};
use scdetect::{commands, CliError};

#[derive(Parser)]
#[command(name = "scdetect", version)]
#[command(about = "Counter-ratio side-channel detection experiments on a simulated scheduler")]
struct Cli {
    /// Flat key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Experiment seed (required by run, evaluate and leakage)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Comma-separated gamma values (`inf` disables detection)
    #[arg(long, global = true, value_name = "LIST")]
    gamma: Option<String>,

    #[arg(long, global = true, value_parser = ["none", "te", "sc", "te+sc"])]
    policy: Option<String>,

    /// Extra config override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate thresholds and window bounds from the calibration presets
    Calibrate,
    /// Write one preset trace in scdtrace format
    GenTrace {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_parser = cycles)]
        horizon: Option<u64>,
        /// Trace file to write (default: <out>/<preset>.scdtrace)
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Simulate trace files and presets together; reports events and overhead
    Run {
        traces: Vec<PathBuf>,
        /// Generated preset workload, repeatable
        #[arg(long = "preset")]
        presets: Vec<String>,
        /// Stop the simulation at this many cycles
        #[arg(long, value_parser = cycles)]
        horizon: Option<u64>,
    },
    /// Confusion matrix of the evaluation corpus per gamma
    Evaluate,
    /// Secret bytes extracted before detection per gamma and victim rate
    Leakage,
}

fn cycles(s: &str) -> Result<u64, String> {
    parse_u64(s).ok_or_else(|| format!("expected an integer or 2^N, got `{s}`"))
}

fn parse_gammas(s: &str) -> Result<Vec<Gamma>, CliError> {
    parse_gamma_list(s)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::Config(format!("bad gamma list `{s}`")))
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(g) = &cli.gamma {
        cfg.gamma = parse_gammas(g)?;
    }
    if let Some(p) = &cli.policy {
        cfg.set("policy", p)?;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = effective_config(cli)?;
    match &cli.command {
        Command::Calibrate => commands::calibrate(&cfg, &cli.out),
        Command::GenTrace {
            preset,
            horizon,
            output,
        } => {
            if let Some(p) = preset {
                cfg.preset = p.clone();
            }
            if let Some(h) = horizon {
                cfg.horizon = *h;
            }
            commands::gen_trace(&cfg, &cli.out, output.as_deref())
        }
        Command::Run {
            traces,
            presets,
            horizon,
        } => commands::run(&cfg, &cli.out, traces, presets, *horizon),
        Command::Evaluate => commands::evaluate(&cfg, &cli.out),
        Command::Leakage => commands::leakage(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
