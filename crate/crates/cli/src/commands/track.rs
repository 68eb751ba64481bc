use std::path::Path;

use advo_core::frontend::FrontendParams;
use advo_core::learn::rollout::FrameOutcome;
use advo_core::learn::{run_policy, run_static};
use advo_core::policy::Policy;
use advo_core::reward::{sequence_metrics, MetricsRecord};

use crate::commands::create_dir;
use crate::config::RunConfig;
use crate::dataset::Sequence;
use crate::error::{CliError, CliResult};

pub enum Controller {
    Static(FrontendParams),
    Policy(Box<Policy>),
}

/// Metrics rows for one sequence; drift columns stay blank where flow is absent.
pub fn track_sequence(seq: &Sequence, controller: &Controller, cfg: &RunConfig) -> CliResult<Vec<MetricsRecord>> {
    let ctx = cfg.eval_context();
    let outcomes: Vec<FrameOutcome> = match controller {
        Controller::Static(p) => run_static(&seq.frames, p, &ctx)?,
        Controller::Policy(policy) => run_policy(&seq.frames, policy, &ctx)?,
    };
    Ok(outcomes
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let has_flow = k > 0 && seq.frames[k - 1].gt_flow_to_next.is_some();
            MetricsRecord::new(&seq.name, &o.stats, &o.breakdown, has_flow)
        })
        .collect())
}

pub fn write_metrics(path: &Path, rows: &[MetricsRecord]) -> CliResult<()> {
    let err = |e: csv::Error| CliError::data(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn run(
    sequences: &[Sequence],
    controller: &Controller,
    require_drift: bool,
    cfg: &RunConfig,
    out: &Path,
    file_name: &str,
) -> CliResult<()> {
    if require_drift {
        if let Some(s) = sequences.iter().find(|s| !s.has_flow()) {
            return Err(CliError::MissingFlow(s.name.clone()));
        }
    }
    create_dir(out)?;
    let mut all = Vec::new();
    for seq in sequences {
        let rows = track_sequence(seq, controller, cfg)?;
        let m = sequence_metrics(&rows, seq.fps(cfg.world.fps))?;
        let drift = m.drift_px_per_s.map_or_else(|| "-".to_string(), |d| format!("{d:.3}"));
        println!(
            "{}: {} frames, drift {drift} px/s, age {:.2}, coverage {:.1}%, time {:.3} ms, reward {:.3}",
            seq.name,
            rows.len(),
            m.mean_age,
            m.coverage_pct,
            m.tau_ms,
            m.mean_reward
        );
        all.extend(rows);
    }
    write_metrics(&out.join(file_name), &all)
}
