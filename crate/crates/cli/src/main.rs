mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{resolve, RunConfig};
use error::{usage, CliResult};

/// Selects the compute device; only the CPU is available.
pub const DEVICE_VAR: &str = "DOWNSCALE_DEVICE";

#[derive(Parser)]
#[command(name = "downscale", version, about = "Recurrent GAN downscaling of precipitation sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// tiny, desk or full.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input directory for `plot`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    ensemble_size: Option<usize>,
    #[arg(long, global = true)]
    noise_amplitude: Option<f32>,
    #[arg(long, global = true)]
    lambda_r: Option<f32>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset container.
    SynthData,
    /// Train the GAN, writing checkpoints and a metric history.
    Train,
    /// Generate ensembles for the test conditions.
    Gen,
    /// Score a generator on the test split.
    Eval,
    /// Score the GAN against the baselines on the test split.
    Compare,
    /// Run the generator frame by frame over a time-ordered container.
    Stream,
    /// Draw figures from a training or evaluation output directory.
    Plot,
    /// Print the resolved configuration.
    ShowConfig,
}

fn check_device() -> CliResult<()> {
    match std::env::var(DEVICE_VAR) {
        Ok(d) if d != "cpu" => Err(usage(format!("{DEVICE_VAR}={d}: only 'cpu' is supported"))),
        _ => Ok(()),
    }
}

fn run_config(c: &Common) -> CliResult<RunConfig> {
    let s = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
    let mut flags: Vec<(String, Option<String>)> = Vec::new();
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        flags.push((k.trim().into(), Some(v.trim().into())));
    }
    flags.extend([
        ("seed".into(), c.seed.map(|v| v.to_string())),
        ("dataset".into(), s(&c.dataset)),
        ("checkpoint".into(), s(&c.checkpoint)),
        ("out".into(), s(&c.out)),
        ("input".into(), s(&c.input)),
        ("ensemble_size".into(), c.ensemble_size.map(|v| v.to_string())),
        ("noise_amplitude".into(), c.noise_amplitude.map(|v| v.to_string())),
        ("lambda_r".into(), c.lambda_r.map(|v| v.to_string())),
    ]);
    let flags: Vec<(&str, Option<String>)> = flags.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    resolve(c.preset.as_deref(), c.config.as_deref(), &flags)
}

fn run(cli: Cli) -> CliResult<()> {
    check_device()?;
    let cfg = run_config(&cli.common)?;
    match cli.command {
        Command::SynthData => commands::synth_data(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Gen => commands::gen_cmd(&cfg),
        Command::Eval => commands::eval_cmd(&cfg),
        Command::Compare => commands::compare_cmd(&cfg),
        Command::Stream => commands::stream_cmd(&cfg),
        Command::Plot => {
            let input = cfg.input.as_deref().ok_or_else(|| usage("--input is required for plot"))?;
            let out = cfg.out.as_deref().unwrap_or(input);
            for p in plot::plot_dir(input, out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
