//! Shared fixtures for CLI tests: synthetic sequences with known ground
//! truth, written in the on-disk formats the binary consumes.

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fpps_core::geometry::{apply_transform, compose, inverse, RigidTransform};
use fpps_core::io::{write_kitti_bin, write_kitti_poses, KittiFrame, PoseTrack};
use fpps_core::synth::{random_rigid_transform, structured_scene};

pub fn fpps() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fpps"));
    // Keep runs hermetic: ambient FPPS_* settings must not leak in.
    for (key, _) in std::env::vars() {
        if key.starts_with("FPPS_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

// Not every test target touches every field.
#[allow(dead_code)]
pub struct SyntheticSequence {
    pub frames: Vec<PathBuf>,
    pub poses: PathBuf,
    /// Ground-truth motion frame i → frame i+1, one per consecutive pair.
    pub relative_motions: Vec<RigidTransform>,
}

/// Writes `frames` views of one structured world scene along a random pose
/// walk, plus the matching pose file.
pub fn write_sequence(
    dir: &Path,
    frames: usize,
    points: usize,
    seed: u64,
    step_translation_m: f64,
    step_rotation_rad: f64,
) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = structured_scene(points, &mut rng);

    let mut pose = RigidTransform::identity();
    let mut poses = Vec::with_capacity(frames);
    let mut relative_motions = Vec::new();
    let mut frame_paths = Vec::with_capacity(frames);

    for index in 0..frames {
        let in_sensor_frame = apply_transform(&world, &inverse(&pose)).unwrap();
        let path = dir.join(format!("{index:06}.bin"));
        write_kitti_bin(
            &KittiFrame {
                points: in_sensor_frame,
                intensities: vec![0.5; points],
                sequence_id: 0,
                frame_index: index as u32,
            },
            &path,
        )
        .unwrap();
        frame_paths.push(path);
        poses.push(pose);

        if index + 1 < frames {
            let step = random_rigid_transform(&mut rng, step_translation_m, step_rotation_rad);
            let next = compose(&pose, &step);
            relative_motions.push(compose(&inverse(&next), &pose));
            pose = next;
        }
    }

    let poses_path = dir.join("poses.txt");
    write_kitti_poses(&PoseTrack { poses }, &poses_path).unwrap();

    SyntheticSequence {
        frames: frame_paths,
        poses: poses_path,
        relative_motions,
    }
}
