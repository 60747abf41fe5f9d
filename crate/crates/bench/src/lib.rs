//! Input builders shared by the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fpps_core::geometry::{Point3, PointCloud, RigidTransform};
use fpps_core::synth::{make_synthetic_pair, random_rigid_transform};

pub fn uniform_cloud(n: usize, extent: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
            )
        })
        .collect()
}

/// A registration workload: structured scene under a moderate rigid motion.
pub fn registration_pair(n: usize, seed: u64) -> (PointCloud, PointCloud, RigidTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motion = random_rigid_transform(&mut rng, 0.5, 5f64.to_radians());
    make_synthetic_pair(n, &motion, 0.01, 0.0, seed.wrapping_add(1))
}
