//! Dataset discovery: a single sequence directory or a parent of several.

use std::path::{Path, PathBuf};

use advo_core::io::{load_sequence, SequenceFrame};
use advo_core::learn::TrainScene;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<SequenceFrame>,
}

impl Sequence {
    /// Frame rate implied by the timestamps, or `fallback` for a single frame.
    pub fn fps(&self, fallback: f64) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) if b.timestamp > a.timestamp => {
                (self.frames.len() - 1) as f64 / (b.timestamp - a.timestamp)
            }
            _ => fallback,
        }
    }

    /// True when every frame except the last carries forward flow.
    pub fn has_flow(&self) -> bool {
        let n = self.frames.len();
        n > 1 && self.frames[..n - 1].iter().all(|f| f.gt_flow_to_next.is_some())
    }

    pub fn into_scene(self) -> TrainScene {
        TrainScene {
            name: self.name,
            frames: self.frames,
        }
    }
}

fn is_sequence_dir(dir: &Path) -> CliResult<bool> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("frame_") && (name.ends_with(".png") || name.ends_with(".pgm")) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn sequence_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Sequence directories under `root`, sorted by name.
pub fn sequence_dirs(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(CliError::config(format!("dataset {} is not a directory", root.display())));
    }
    if is_sequence_dir(root)? {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| CliError::data(format!("{}: {e}", root.display())))?;
    for entry in entries.flatten() {
        let p = entry.path();
        if p.is_dir() && is_sequence_dir(&p)? {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::data(format!("no sequences found under {}", root.display())));
    }
    Ok(dirs)
}

pub fn load_dataset(root: &Path) -> CliResult<Vec<Sequence>> {
    sequence_dirs(root)?
        .into_iter()
        .map(|dir| {
            let frames = load_sequence(&dir)?;
            if frames.is_empty() {
                return Err(CliError::Core(advo_core::Error::EmptySequence));
            }
            Ok(Sequence {
                name: sequence_name(&dir),
                frames,
            })
        })
        .collect()
}
