use std::path::Path;

use advo_core::frontend::FrontendParams;
use advo_core::learn::train::initial_policy;
use advo_core::learn::{train, TrainScene};
use advo_core::policy::{ConvEncoder, ObsMode, Policy};
use advo_core::sim::generate_episode;

use crate::commands::simulate::scene_name;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// `n` procedural scenes seeded like `simulate`.
pub fn live_scenes(cfg: &RunConfig, n: usize) -> CliResult<Vec<TrainScene>> {
    (0..n)
        .map(|k| {
            Ok(TrainScene {
                name: scene_name(k),
                frames: generate_episode(&cfg.world, cfg.seed.wrapping_add(k as u64))?.frames,
            })
        })
        .collect()
}

pub fn load_encoder(path: &Path) -> CliResult<ConvEncoder> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read encoder {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(advo_core::Error::Checkpoint(format!("{}: {e}", path.display()))))
}

pub fn run(
    scenes: &[TrainScene],
    reference: &FrontendParams,
    encoder: Option<ConvEncoder>,
    resume: Option<&Path>,
    cfg: &RunConfig,
    out: &Path,
) -> CliResult<()> {
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    if encoder.is_some() {
        tc.observation.mode = ObsMode::Encoder;
    }
    let mut policy = match resume {
        Some(p) => {
            let policy = Policy::load(p)?;
            if encoder.is_some() {
                return Err(CliError::config("--encoder cannot be combined with --resume"));
            }
            tc.observation = policy.observation.clone();
            policy
        }
        None => initial_policy(&tc, scenes, reference, encoder)?,
    };
    let start = policy.update;
    let rows = train(&mut policy, scenes, reference, &cfg.eval_context(), &tc, Some(out))?;
    match rows.last() {
        Some(r) => println!(
            "updates {start}..{}: final mean reward {:.4}, lr {:.3e}",
            policy.update, r.mean_train_reward, r.lr
        ),
        None => println!("no updates run (policy at update {start})"),
    }
    println!("checkpoint {}", out.join("policy.json").display());
    Ok(())
}
