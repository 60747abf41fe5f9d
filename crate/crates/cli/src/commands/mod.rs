pub mod bench;
pub mod compare;
pub mod model;
pub mod register;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use fpps_core::geometry::PointCloud;
use fpps_core::io::{read_kitti_bin, read_xyz};

/// Loads a cloud by extension (.bin packed float32, .xyz ASCII), returning
/// the read time for `--include-io` reporting.
pub(crate) fn load_cloud(path: &Path) -> Result<(PointCloud, f64)> {
    let started = Instant::now();
    let cloud = match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_kitti_bin(path)?.points,
        Some("xyz") | Some("txt") => read_xyz(path)?,
        other => bail!(
            "unsupported input format {:?} for {} (expected .bin or .xyz)",
            other.unwrap_or(""),
            path.display()
        ),
    };
    let io_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((cloud, io_ms))
}

/// The `.bin` frames of a sequence directory, in name order.
pub(crate) fn list_bin_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading sequence directory {}", dir.display()))?;
    let mut frames: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("bin"))
        .collect();
    frames.sort();
    if frames.is_empty() {
        bail!("no .bin frames found in {}", dir.display());
    }
    Ok(frames)
}
