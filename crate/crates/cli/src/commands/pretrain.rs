use std::fmt::Write as _;
use std::path::Path;

use advo_core::learn::bandit::bandit_critic;
use advo_core::learn::{pretrain_encoder_bandit, BanditFrame};
use advo_core::policy::ConvEncoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::{create_dir, write_json};
use crate::config::RunConfig;
use crate::dataset::Sequence;
use crate::error::{CliError, CliResult};

/// Consecutive frame pairs joined by ground-truth flow.
pub fn bandit_frames(sequences: &[Sequence]) -> CliResult<Vec<BanditFrame>> {
    let mut out = Vec::new();
    for s in sequences {
        if !s.has_flow() {
            return Err(CliError::MissingFlow(s.name.clone()));
        }
        for pair in s.frames.windows(2) {
            let flow = pair[0].gt_flow_to_next.clone().expect("checked above");
            out.push(BanditFrame {
                prev: pair[0].image.clone(),
                cur: pair[1].image.clone(),
                flow,
            });
        }
    }
    Ok(out)
}

pub fn run(sequences: &[Sequence], cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let dataset = bandit_frames(sequences)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = ConvEncoder::new(&mut rng);
    let mut critic = bandit_critic(&cfg.bandit.hidden, &mut rng);
    let report = pretrain_encoder_bandit(
        &dataset,
        &mut encoder,
        &mut critic,
        &cfg.bandit,
        cfg.tracker.to_config(),
        &mut rng,
    )?;
    create_dir(out)?;
    write_json(&out.join("encoder.json"), &encoder)?;
    let mut text = String::from("step,loss\n");
    for (k, l) in report.losses.iter().enumerate() {
        let _ = writeln!(text, "{k},{l}");
    }
    let path = out.join("bandit_loss.csv");
    std::fs::write(&path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    let tail = report.losses.len().min(100);
    let last = &report.losses[report.losses.len() - tail..];
    let mean = if tail == 0 { f64::NAN } else { last.iter().sum::<f64>() / tail as f64 };
    println!("{} frame pairs, {} steps, final loss {mean:.5}", dataset.len(), report.losses.len());
    Ok(())
}
