//! `advo`: simulate data, track, tune, train and compare frontend configurations.

mod commands;
mod config;
mod dataset;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::report::{parse_method, MethodInput};
use crate::commands::track::Controller;
use crate::config::{require_path, RunConfig};
use crate::dataset::load_dataset;
use crate::error::{CliError, CliResult, EXIT_CONFIG, EXIT_INTERNAL};

#[derive(Debug, Parser)]
#[command(name = "advo", version, about = "Adaptive sparse visual-odometry frontend")]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Hardware scaling of the runtime model, overriding the configuration file.
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate procedural sequences with ground-truth flow and poses.
    Simulate {
        /// Number of scenes; scene k uses seed + k.
        #[arg(long)]
        scenes: Option<usize>,
        /// Frames per scene.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Track a dataset with static parameters or a policy and write per-frame metrics.
    Track {
        /// Sequence directory or a directory of sequences.
        dataset: PathBuf,
        /// JSON parameter file (bare or as written by tune-pso).
        #[arg(long, conflicts_with = "checkpoint")]
        params: Option<PathBuf>,
        /// Policy checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Fail unless every sequence has ground-truth flow.
        #[arg(long)]
        require_drift: bool,
        /// Name of the metrics file inside the output directory.
        #[arg(long, default_value = "metrics.csv")]
        metrics: String,
    },
    /// Tune static parameters by particle swarm optimization.
    TunePso {
        /// Sequence directory or a directory of sequences.
        #[arg(required_unless_present = "sphere_self_test")]
        dataset: Option<PathBuf>,
        /// Label of the tuning split, used in the output file name.
        #[arg(long, default_value = "train")]
        split: String,
        /// Check the optimizer on the sphere function instead of tuning.
        #[arg(long)]
        sphere_self_test: bool,
    },
    /// Pretrain the image encoder with a contextual bandit.
    PretrainEncoder {
        /// Sequence directory or a directory of sequences, with flow.
        dataset: PathBuf,
        /// Keep the encoder fixed and fit only the bandit critic.
        #[arg(long)]
        freeze_encoder: bool,
    },
    /// Train the parameter policy with PPO.
    Train {
        /// Training sequences; live simulation when omitted.
        dataset: Option<PathBuf>,
        /// Static reference parameters whose reward is subtracted.
        #[arg(long)]
        reference: PathBuf,
        /// Pretrained encoder; switches the observation to encoder features.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Total number of updates, overriding the configuration file.
        #[arg(long)]
        updates: Option<usize>,
    },
    /// Compare metrics files of two or more methods.
    Report {
        /// `NAME=PATH` of a metrics file; repeat for every method.
        #[arg(long = "method", value_parser = parse_method, required = true, num_args = 1)]
        methods: Vec<MethodInput>,
        /// Frame rate for converting drift to px/s; defaults to the world frame rate.
        #[arg(long)]
        fps: Option<f64>,
    },
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.beta {
        cfg.cost.beta = b;
    }
    match &cli.command {
        Command::Simulate { scenes, frames } => {
            if let Some(n) = scenes {
                cfg.simulate.scenes = *n;
            }
            if let Some(n) = frames {
                cfg.world.n_frames = *n;
            }
        }
        Command::PretrainEncoder { freeze_encoder: true, .. } => cfg.bandit.freeze_encoder = true,
        Command::Train { updates: Some(n), .. } => cfg.train.ppo.updates = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate { .. } => commands::simulate::run(&cfg, cfg.simulate.scenes, out),
        Command::Track {
            dataset,
            params,
            checkpoint,
            require_drift,
            metrics,
        } => {
            let controller = match (params, checkpoint) {
                (_, Some(c)) => Controller::Policy(Box::new(advo_core::policy::Policy::load(&require_path(c, "checkpoint")?)?)),
                (Some(p), None) => Controller::Static(commands::read_params(p)?),
                (None, None) => Controller::Static(cfg.params),
            };
            if metrics.is_empty() || metrics.contains(['/', '\\']) {
                return Err(CliError::config("--metrics must be a plain file name"));
            }
            let seqs = load_dataset(&require_path(dataset, "dataset")?)?;
            commands::track::run(&seqs, &controller, *require_drift, &cfg, out, metrics)
        }
        Command::TunePso {
            dataset,
            split,
            sphere_self_test,
        } => {
            if *sphere_self_test {
                return commands::tune::sphere(cfg.seed);
            }
            let dataset = dataset.as_ref().expect("required by the parser");
            let seqs = load_dataset(&require_path(dataset, "dataset")?)?;
            commands::tune::run(&seqs, split, &cfg, out).map(|_| ())
        }
        Command::PretrainEncoder { dataset, .. } => {
            let seqs = load_dataset(&require_path(dataset, "dataset")?)?;
            commands::pretrain::run(&seqs, &cfg, out)
        }
        Command::Train {
            dataset,
            reference,
            encoder,
            resume,
            ..
        } => {
            let reference = commands::read_params(&require_path(reference, "reference parameters")?)?;
            let encoder = encoder
                .as_ref()
                .map(|p| commands::train::load_encoder(&require_path(p, "encoder")?))
                .transpose()?;
            let resume = resume.as_ref().map(|p| require_path(p, "checkpoint")).transpose()?;
            let scenes = match dataset {
                Some(d) => load_dataset(&require_path(d, "dataset")?)?
                    .into_iter()
                    .map(|s| s.into_scene())
                    .collect(),
                None => commands::train::live_scenes(&cfg, cfg.simulate.scenes)?,
            };
            commands::train::run(&scenes, &reference, encoder, resume.as_deref(), &cfg, out)
        }
        Command::Report { methods, fps } => {
            if methods.len() < 2 {
                return Err(CliError::config("report needs at least two --method arguments"));
            }
            for m in methods {
                require_path(&m.path, "metrics file")?;
            }
            let fps = fps.unwrap_or(cfg.world.fps);
            if !(fps > 0.0) {
                return Err(CliError::config("--fps must be positive"));
            }
            commands::report::run(methods, fps, out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL as u8),
    }
}
