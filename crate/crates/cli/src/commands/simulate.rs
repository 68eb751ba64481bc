use std::path::Path;

use advo_core::io::save_sequence;
use advo_core::sim::generate_episode;

use crate::commands::create_dir;
use crate::config::RunConfig;
use crate::error::CliResult;

pub fn scene_name(k: usize) -> String {
    format!("scene_{k:03}")
}

/// Writes `scenes` procedural episodes, scene `k` seeded with `seed + k`.
pub fn run(cfg: &RunConfig, scenes: usize, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    for k in 0..scenes {
        let ep = generate_episode(&cfg.world, cfg.seed.wrapping_add(k as u64))?;
        let dir = out.join(scene_name(k));
        save_sequence(&dir, &ep.frames)?;
        let flows = ep.frames.iter().filter(|f| f.gt_flow_to_next.is_some()).count();
        println!("{}: {} frames, {} flow files", scene_name(k), ep.frames.len(), flows);
    }
    Ok(())
}
