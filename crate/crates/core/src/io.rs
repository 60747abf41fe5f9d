//! KITTI odometry ingestion and deterministic sampling.
//!
//! Formats:
//! * velodyne frames: packed little-endian `f32` quadruplets
//!   (x, y, z, reflectance), extension `.bin` — read and written bit-exactly;
//! * pose files: ASCII, 12 whitespace-separated reals per line, the row-major
//!   top 3×4 of a homogeneous pose matrix;
//! * ASCII XYZ: one `x y z` per line, `#` comments allowed — a debug-friendly
//!   secondary format.
//!
//! Coordinates are promoted to `f64` on load; the original `f32` values are
//! recovered exactly on write, so round-trips are lossless.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Point3, PointCloud, RigidTransform};
use crate::svd::nearest_rotation;
use nalgebra::{Matrix3, Vector3};

/// How far load-time re-orthonormalization may move a parsed pose rotation
/// before the file is rejected as not encoding a rigid motion.
pub const POSE_RIGIDITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file length {len} is not a multiple of 16 bytes")]
    MalformedLength { path: String, len: usize },
    #[error("{path}: point {index} has non-finite components")]
    NonFinitePoint { path: String, index: usize },
    #[error("{path}:{line}: expected {expected} numbers, found {found}")]
    FieldCount {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: could not parse `{token}` as a number")]
    Parse {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: rotation is {deviation:.3e} from the nearest proper rotation (tolerance {POSE_RIGIDITY_TOL:.0e})")]
    PoseNotRigid {
        path: String,
        line: usize,
        deviation: f64,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One LiDAR frame: geometry plus per-point reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiFrame {
    pub points: PointCloud,
    /// Reflectance per point, same length as `points`. Parsed and retained
    /// for lossless round-trips; registration never reads it.
    pub intensities: Vec<f32>,
    pub sequence_id: u32,
    pub frame_index: u32,
}

/// Ground-truth poses, one per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    pub poses: Vec<RigidTransform>,
}

/// Reads a packed-float32 velodyne frame.
///
/// The frame index is taken from the file stem when it parses as an integer
/// (`000042.bin` → 42). An empty file yields an empty frame with a warning.
pub fn read_kitti_bin(path: impl AsRef<Path>) -> Result<KittiFrame, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(IoError::MalformedLength {
            path: path.display().to_string(),
            len: bytes.len(),
        });
    }
    if bytes.is_empty() {
        log::warn!("{}: empty frame", path.display());
    }

    let n = bytes.len() / 16;
    let mut points = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    for (index, record) in bytes.chunks_exact(16).enumerate() {
        let field = |i: usize| {
            f32::from_le_bytes([record[4 * i], record[4 * i + 1], record[4 * i + 2], record[4 * i + 3]])
        };
        let (x, y, z, r) = (field(0), field(1), field(2), field(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            return Err(IoError::NonFinitePoint {
                path: path.display().to_string(),
                index,
            });
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        intensities.push(r);
    }

    let frame_index = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);

    Ok(KittiFrame {
        points: PointCloud::new(points),
        intensities,
        sequence_id: 0,
        frame_index,
    })
}

/// Writes a frame back to the packed-float32 layout. Coordinates that were
/// loaded from a `.bin` file reproduce their original bits.
pub fn write_kitti_bin(frame: &KittiFrame, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(frame.points.len() * 16);
    for (p, &intensity) in frame.points.iter().zip(&frame.intensities) {
        bytes.extend_from_slice(&(p.x as f32).to_le_bytes());
        bytes.extend_from_slice(&(p.y as f32).to_le_bytes());
        bytes.extend_from_slice(&(p.z as f32).to_le_bytes());
        bytes.extend_from_slice(&intensity.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads a pose file: 12 reals per line, row-major 3×4.
///
/// Rotations are re-orthonormalized on load; a rotation farther than
/// [`POSE_RIGIDITY_TOL`] from the nearest proper rotation fails the parse.
pub fn read_kitti_poses(path: impl AsRef<Path>) -> Result<PoseTrack, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut poses = Vec::new();
    for (line_index, line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut values = [0.0f64; 12];
        let mut count = 0;
        for token in line.split_whitespace() {
            if count < 12 {
                values[count] = token.parse().map_err(|_| IoError::Parse {
                    path: path.display().to_string(),
                    line: line_no,
                    token: token.to_string(),
                })?;
            }
            count += 1;
        }
        if count != 12 || values.iter().any(|v| !v.is_finite()) {
            return Err(IoError::FieldCount {
                path: path.display().to_string(),
                line: line_no,
                expected: 12,
                found: count,
            });
        }

        let raw = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        let pose = match RigidTransform::new(raw, translation) {
            Ok(pose) => pose,
            Err(_) => {
                let projected = nearest_rotation(&raw);
                let deviation = (projected - raw).norm();
                if deviation > POSE_RIGIDITY_TOL {
                    return Err(IoError::PoseNotRigid {
                        path: path.display().to_string(),
                        line: line_no,
                        deviation,
                    });
                }
                RigidTransform::new(projected, translation).map_err(|_| IoError::PoseNotRigid {
                    path: path.display().to_string(),
                    line: line_no,
                    deviation,
                })?
            }
        };
        poses.push(pose);
    }
    Ok(PoseTrack { poses })
}

/// Writes poses in the 12-reals-per-line layout with shortest round-trip
/// formatting, so `read(write(read(f)))` is a fixed point.
pub fn write_kitti_poses(track: &PoseTrack, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out = String::new();
    for pose in &track.poses {
        let r = pose.rotation();
        let t = pose.translation();
        let row = [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads the ASCII XYZ debug format: `x y z` per line, `#` comments.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut points = Vec::new();
    for (line_index, raw_line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(IoError::FieldCount {
                path: path.display().to_string(),
                line: line_no,
                expected: 3,
                found: tokens.len(),
            });
        }
        let mut coords = [0.0f64; 3];
        for (slot, token) in coords.iter_mut().zip(&tokens) {
            *slot = token.parse().map_err(|_| IoError::Parse {
                path: path.display().to_string(),
                line: line_no,
                token: token.to_string(),
            })?;
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(IoError::NonFinitePoint {
                path: path.display().to_string(),
                index: points.len(),
            });
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(PointCloud::new(points))
}

pub fn write_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in cloud.iter() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Uniform sample of `n` points without replacement, deterministic for a
/// fixed seed.
///
/// The PRNG is pinned (ChaCha8 seeded with `seed`) and the selection is an
/// explicit partial Fisher-Yates shuffle, so the same seed reproduces the
/// same sample on any platform. When `n >= len` the cloud comes back whole,
/// in its original order.
pub fn sample_points(cloud: &PointCloud, n: usize, seed: u64) -> PointCloud {
    if n >= cloud.len() {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    for i in 0..n {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    indices[..n].iter().map(|&i| cloud[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn bin_hand_built_fixture() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("000007.bin");
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5, 4.0, 5.0, 6.0, 0.25] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();

        let frame = read_kitti_bin(&path).unwrap();
        assert_eq!(frame.points.len(), 2);
        assert_eq!(frame.points[0], Point3::new(1.0, 2.0, 3.0));
        assert_eq!(frame.points[1], Point3::new(4.0, 5.0, 6.0));
        assert_eq!(frame.intensities, vec![0.5, 0.25]);
        assert_eq!(frame.frame_index, 7);
    }

    #[test]
    fn bin_empty_file_gives_empty_frame() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        fs::write(&path, b"").unwrap();
        let frame = read_kitti_bin(&path).unwrap();
        assert!(frame.points.is_empty());
        assert!(frame.intensities.is_empty());
    }

    #[test]
    fn bin_rejects_bad_length_and_nan() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, [0u8; 15]).unwrap();
        assert!(matches!(
            read_kitti_bin(&path),
            Err(IoError::MalformedLength { len: 15, .. })
        ));

        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in [4.0f32, f32::NAN, 6.0, 0.25] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_kitti_bin(&path),
            Err(IoError::NonFinitePoint { index: 1, .. })
        ));
    }

    #[test]
    fn bin_roundtrip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let original = dir.path().join("a.bin");
        let copy = dir.path().join("b.bin");

        // Awkward bit patterns included: negative zero, subnormal, tiny.
        let values: Vec<f32> = vec![
            -0.0,
            1.5e-41,
            3.1415927,
            -123.456,
            0.25,
            1.0e-7,
            87.5,
            0.0,
        ];
        let mut bytes = Vec::new();
        for v in &values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&original, &bytes).unwrap();

        let frame = read_kitti_bin(&original).unwrap();
        write_kitti_bin(&frame, &copy).unwrap();
        assert_eq!(fs::read(&original).unwrap(), fs::read(&copy).unwrap());
    }

    #[test]
    fn poses_identity_and_translation_lines() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        fs::write(
            &path,
            "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 4.5 0 1 0 -2.0 0 0 1 0.25\n",
        )
        .unwrap();
        let track = read_kitti_poses(&path).unwrap();
        assert_eq!(track.poses.len(), 2);
        assert_eq!(track.poses[0], RigidTransform::identity());
        assert_eq!(*track.poses[1].rotation(), Matrix3::identity());
        assert_eq!(*track.poses[1].translation(), Vector3::new(4.5, -2.0, 0.25));
    }

    #[test]
    fn poses_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        let poses: Vec<RigidTransform> = (0..10)
            .map(|_| {
                RigidTransform::from_parts(
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ),
                    rng.gen_range(-3.0..3.0),
                    Vector3::new(
                        rng.gen_range(-100.0..100.0),
                        rng.gen_range(-100.0..100.0),
                        rng.gen_range(-100.0..100.0),
                    ),
                )
            })
            .collect();
        let track = PoseTrack { poses };

        let dir = tempdir().unwrap();
        let first = dir.path().join("p1.txt");
        let second = dir.path().join("p2.txt");
        write_kitti_poses(&track, &first).unwrap();
        let loaded = read_kitti_poses(&first).unwrap();
        for (a, b) in track.poses.iter().zip(&loaded.poses) {
            assert!((a.to_homogeneous() - b.to_homogeneous()).norm() < 1e-6);
        }
        // Fixed point: a second write emits identical bytes.
        write_kitti_poses(&loaded, &second).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    }

    #[test]
    fn poses_reject_garbage() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        fs::write(&path, "1 0 0 0 0 1 0 0 0 0 1\n").unwrap();
        assert!(matches!(
            read_kitti_poses(&path),
            Err(IoError::FieldCount { line: 1, found: 11, .. })
        ));

        fs::write(&path, "1 0 0 0 0 1 0 zero 0 0 1 0\n").unwrap();
        assert!(matches!(
            read_kitti_poses(&path),
            Err(IoError::Parse { line: 1, .. })
        ));

        // A matrix far from any rotation.
        fs::write(&path, "2 0 0 0 0 2 0 0 0 0 2 0\n").unwrap();
        assert!(matches!(
            read_kitti_poses(&path),
            Err(IoError::PoseNotRigid { line: 1, .. })
        ));
    }

    #[test]
    fn xyz_roundtrip_and_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        fs::write(
            &path,
            "# header comment\n1 2 3\n-0.5 0.25 1e3  # trailing comment\n\n4 5 6\n",
        )
        .unwrap();
        let cloud = read_xyz(&path).unwrap();
        assert_eq!(
            cloud.points(),
            &[
                Point3::new(1.0, 2.0, 3.0),
                Point3::new(-0.5, 0.25, 1000.0),
                Point3::new(4.0, 5.0, 6.0)
            ]
        );

        let out = dir.path().join("copy.xyz");
        write_xyz(&cloud, &out).unwrap();
        assert_eq!(read_xyz(&out).unwrap(), cloud);
    }

    #[test]
    fn sample_returns_whole_cloud_when_n_large() {
        let cloud: PointCloud = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(sample_points(&cloud, 5, 1), cloud);
        assert_eq!(sample_points(&cloud, 99, 1), cloud);
    }

    #[test]
    fn sample_is_deterministic_and_duplicate_free() {
        let cloud: PointCloud = (0..100).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let a = sample_points(&cloud, 40, 123);
        let b = sample_points(&cloud, 40, 123);
        assert_eq!(a, b);
        let c = sample_points(&cloud, 40, 124);
        assert_ne!(a, c);

        let mut xs: Vec<i64> = a.iter().map(|p| p.x as i64).collect();
        xs.sort_unstable();
        xs.dedup();
        assert_eq!(xs.len(), 40);
    }

    #[test]
    fn sample_frequencies_are_uniform() {
        // 10 points, n = 3: each point should appear with frequency 0.3.
        let cloud: PointCloud = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let trials = 100_000;
        let mut counts = [0u32; 10];
        for seed in 0..trials {
            for p in sample_points(&cloud, 3, seed).iter() {
                counts[p.x as usize] += 1;
            }
        }
        for &c in &counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.3).abs() < 0.01, "frequency {freq}");
        }
    }
}
