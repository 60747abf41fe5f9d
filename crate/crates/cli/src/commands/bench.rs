use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};

use fpps_core::geometry::{compose, inverse, PointCloud, RigidTransform};
use fpps_core::io::{read_kitti_bin, read_kitti_poses, sample_points};
use fpps_core::nn::NnBackend;
use fpps_core::registration::{align_with_backend, IcpResult};

use crate::cli::BenchArgs;
use crate::config::{self, Settings};
use crate::report::{emit, BenchReport, FrameRecord, PairError, TrajectoryReport};

use super::list_bin_frames;

/// A benchmark run: the emitted report plus the raw per-pair results, kept
/// around so `compare` can check cross-backend equivalence.
pub struct SequenceOutcome {
    pub report: BenchReport,
    pub results: Vec<(usize, IcpResult)>,
}

pub fn run(args: &BenchArgs) -> Result<ExitCode> {
    let settings = config::resolve(&args.icp)?;
    let mut outcome = run_sequence(
        &args.seq_dir,
        settings,
        settings.backend,
        args.two_stage,
        args.include_io,
    )?;

    if let Some(poses_path) = &args.poses {
        let poses = read_kitti_poses(poses_path)?;
        outcome.report.trajectory = Some(trajectory_errors(&outcome, &poses.poses));
    }

    if let Some(baseline_path) = &args.baseline {
        let text = fs::read_to_string(baseline_path)
            .with_context(|| format!("reading baseline report {}", baseline_path.display()))?;
        let baseline: BenchReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing baseline report {}", baseline_path.display()))?;
        outcome.report = outcome.report.with_baseline(
            baseline_path.display().to_string(),
            baseline.aggregates.average_latency_ms,
        );
    }

    let report = &outcome.report;
    emit(
        &args.output,
        report.to_text(),
        report.to_csv(args.include_io),
        report,
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Registers every consecutive frame pair of the sequence.
///
/// Each pair samples `sample_n` source points with the fixed seed and aligns
/// them against the full next frame; `two_stage` then refines with the full
/// source cloud starting from the sampled stage's transform. Latency counts
/// align time only. Unreadable frames are skipped with a warning, dropping
/// the pairs they would have formed.
pub fn run_sequence(
    seq_dir: &Path,
    settings: Settings,
    backend: NnBackend,
    two_stage: bool,
    include_io: bool,
) -> Result<SequenceOutcome> {
    let frames = list_bin_frames(seq_dir)?;
    let mut records = Vec::new();
    let mut results = Vec::new();

    let mut previous: Option<(usize, PointCloud, f64)> = None;
    for (index, path) in frames.iter().enumerate() {
        let started = Instant::now();
        let cloud = match read_kitti_bin(path) {
            Ok(frame) if !frame.points.is_empty() => frame.points,
            Ok(_) => {
                log::warn!("skipping empty frame {}", path.display());
                previous = None;
                continue;
            }
            Err(e) => {
                log::warn!("skipping unreadable frame {}: {e}", path.display());
                previous = None;
                continue;
            }
        };
        let io_ms = started.elapsed().as_secs_f64() * 1e3;

        if let Some((source_index, source_full, source_io_ms)) = previous.take() {
            let sampled = sample_points(&source_full, settings.sample_n, settings.seed);
            let config = settings.icp_config();

            let align_started = Instant::now();
            let first = align_with_backend(&sampled, &cloud, &config, backend)?;
            let result = if two_stage {
                let mut refine = config.clone();
                refine.initial_transform = first.final_transform;
                let second = align_with_backend(&source_full, &cloud, &refine, backend)?;
                IcpResult {
                    iterations_run: first.iterations_run + second.iterations_run,
                    ..second
                }
            } else {
                first
            };
            let latency_ms = align_started.elapsed().as_secs_f64() * 1e3;

            records.push(FrameRecord {
                frame: source_index,
                rmse_m: result.fitness_rmse,
                latency_ms,
                iterations: result.iterations_run,
                converged: result.converged,
                io_ms: include_io.then_some(source_io_ms + io_ms),
            });
            results.push((source_index, result));
        }
        previous = Some((index, cloud, io_ms));
    }

    Ok(SequenceOutcome {
        report: BenchReport::new(backend.to_string(), records),
        results,
    })
}

/// Deviation of each estimated pair motion from the ground-truth relative
/// motion `pose[i+1]⁻¹ ∘ pose[i]`.
fn trajectory_errors(outcome: &SequenceOutcome, poses: &[RigidTransform]) -> TrajectoryReport {
    let mut per_pair = Vec::new();
    for (frame, result) in &outcome.results {
        let (Some(pose_a), Some(pose_b)) = (poses.get(*frame), poses.get(frame + 1)) else {
            log::warn!("no ground-truth pose for pair starting at frame {frame}");
            continue;
        };
        let truth = compose(&inverse(pose_b), pose_a);
        let estimated = &result.final_transform;
        let translation_error_m = (estimated.translation() - truth.translation()).norm();
        let relative = truth.rotation().transpose() * estimated.rotation();
        let rotation_error_rad = ((relative.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        per_pair.push(PairError {
            frame: *frame,
            translation_error_m,
            rotation_error_rad,
        });
    }
    let n = per_pair.len().max(1) as f64;
    TrajectoryReport {
        label: "trajectory error vs ground-truth poses (pose frame; no sensor calibration applied)"
            .to_string(),
        average_translation_error_m: per_pair.iter().map(|p| p.translation_error_m).sum::<f64>()
            / n,
        average_rotation_error_rad: per_pair.iter().map(|p| p.rotation_error_rad).sum::<f64>() / n,
        per_pair,
    }
}
