use std::path::Path;

use advo_core::frontend::FrontendParams;
use advo_core::io::SequenceFrame;
use advo_core::learn::{sphere_self_test, tune_static_params};
use serde::{Deserialize, Serialize};

use crate::commands::{create_dir, write_json};
use crate::config::RunConfig;
use crate::dataset::Sequence;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub split: String,
    pub params: FrontendParams,
    /// Mean per-frame total reward of `params` on the tuning frames.
    pub score: f64,
    pub evaluations: usize,
    pub history: Vec<f64>,
}

pub const SPHERE_SEEDS: u64 = 10;
pub const SPHERE_ITERATIONS: usize = 200;
pub const SPHERE_TOLERANCE: f64 = 1e-2;

/// Runs the analytic sphere check for ten seeds; fails unless all pass.
pub fn sphere(seed: u64) -> CliResult<()> {
    let mut failed = 0;
    for k in 0..SPHERE_SEEDS {
        let c = sphere_self_test(seed.wrapping_add(k), 3, SPHERE_ITERATIONS)?;
        let ok = c.passed(SPHERE_TOLERANCE);
        failed += usize::from(!ok);
        println!(
            "sphere seed {}: {} (position error {:.3e}, value gap {:.3e}, {} iterations)",
            c.seed,
            if ok { "pass" } else { "FAIL" },
            c.position_error,
            c.value_gap,
            c.iterations
        );
    }
    if failed > 0 {
        return Err(CliError::Internal(format!("sphere self-test failed for {failed} seeds")));
    }
    println!("sphere self-test: pass");
    Ok(())
}

pub fn run(sequences: &[Sequence], split: &str, cfg: &RunConfig, out: &Path) -> CliResult<TunedParams> {
    if split.is_empty() || !split.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(CliError::config(format!("split label {split:?} must be alphanumeric")));
    }
    let keep = cfg.pso.subset_frames;
    let subsets: Vec<&[SequenceFrame]> = sequences
        .iter()
        .map(|s| if keep > 0 && keep < s.frames.len() { &s.frames[..keep] } else { &s.frames[..] })
        .collect();
    let (params, score, result) = tune_static_params(&subsets, &cfg.eval_context(), &cfg.pso.to_config(cfg.seed))?;
    let tuned = TunedParams {
        split: split.to_string(),
        params,
        score,
        evaluations: result.evaluations,
        history: result.history,
    };
    create_dir(out)?;
    write_json(&out.join(format!("pso_{split}.json")), &tuned)?;
    println!(
        "{split}: fast {} patch {} ransac {:.4} score {score:.4} ({} evaluations)",
        params.fast_threshold, params.klt_patch_size, params.ransac_threshold, tuned.evaluations
    );
    Ok(tuned)
}
