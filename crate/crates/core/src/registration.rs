//! Point-to-point ICP: correspondence estimation with distance gating,
//! closed-form SVD transform estimation, source update, convergence checking,
//! and cumulative transform accumulation, plus a fluent PCL-style facade.

use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{
    apply_transform, compose, transform_delta, GeometryError, PointCloud, RigidTransform,
};
use crate::nn::{brute_force_nn, naive_nn, KdTree, NnBackend, NnError, NnResult, TileConfig};
use crate::svd::Svd3;

/// A gated correspondence is exactly an NN answer that survived the gate.
pub type Correspondence = NnResult;

/// Minimum pair count for rigid estimation to be determined.
pub const MIN_CORRESPONDENCES: usize = 3;
/// Relative singular-value floor below which the correspondence geometry
/// cannot pin down the rotation.
pub const DEGENERATE_SINGULAR_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("source or target cloud is empty")]
    EmptyCloud,
    #[error("invalid ICP config: {reason}")]
    InvalidConfig { reason: &'static str },
    #[error("degenerate correspondences: {found} pair(s) within the gate, at least {MIN_CORRESPONDENCES} required")]
    DegenerateCorrespondences { found: usize },
    #[error(
        "degenerate correspondence geometry: singular values ({sigma0:.3e}, {sigma1:.3e}, {sigma2:.3e}) \
         leave the rotation unobservable about at least two axes"
    )]
    DegenerateGeometry {
        sigma0: f64,
        sigma1: f64,
        sigma2: f64,
    },
    #[error("align called before configuration is complete; missing: {}", missing.join(", "))]
    NotConfigured { missing: Vec<&'static str> },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<RegistrationError>,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// ICP parameters. The defaults are the standard benchmark configuration:
/// 1.0 m correspondence gate, 50 iterations, 1e-5 convergence epsilon.
#[derive(Debug, Clone)]
pub struct IcpConfig {
    /// NN pairs farther apart than this (meters) are dropped as outliers.
    pub max_correspondence_distance: f64,
    pub max_iterations: usize,
    /// Convergence threshold on [`transform_delta`] of the per-iteration
    /// incremental transform.
    pub transformation_epsilon: f64,
    /// Applied to the source once, before the first iteration.
    pub initial_transform: RigidTransform,
    pub tile: TileConfig,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_correspondence_distance: 1.0,
            max_iterations: 50,
            transformation_epsilon: 1e-5,
            initial_transform: RigidTransform::identity(),
            tile: TileConfig::default(),
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.max_correspondence_distance > 0.0) {
            return Err(RegistrationError::InvalidConfig {
                reason: "max_correspondence_distance must be positive",
            });
        }
        if self.max_iterations == 0 {
            return Err(RegistrationError::InvalidConfig {
                reason: "max_iterations must be at least 1",
            });
        }
        if !(self.transformation_epsilon >= 0.0) {
            return Err(RegistrationError::InvalidConfig {
                reason: "transformation_epsilon must be non-negative",
            });
        }
        Ok(())
    }
}

/// Distance-gated correspondences, in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    /// Wraps externally assembled pairs, for driving [`estimate_transform`]
    /// directly.
    pub fn from_pairs(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn inlier_count(&self) -> usize {
        self.pairs.len()
    }
}

/// One ICP iteration: the incremental transform it estimated, the alignment
/// cost at that transform over its gated pairs, and bookkeeping.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub transform: RigidTransform,
    /// Sum of squared residuals over the iteration's gated pairs, evaluated
    /// at `transform`.
    pub cost: f64,
    pub inlier_count: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Ordered composition of all per-iteration transforms applied to the
    /// initial transform.
    pub final_transform: RigidTransform,
    /// True when the epsilon criterion fired; false when the iteration cap
    /// stopped the loop.
    pub converged: bool,
    pub iterations_run: usize,
    /// `sqrt(mean squared residual)` over the final gated correspondence
    /// set, meters.
    pub fitness_rmse: f64,
    pub per_iteration: Vec<IterationRecord>,
}

/// Runs the configured NN engine and drops pairs beyond the gate.
///
/// Fails with [`RegistrationError::DegenerateCorrespondences`] when fewer
/// than [`MIN_CORRESPONDENCES`] pairs survive.
pub fn estimate_correspondences(
    source: &PointCloud,
    target: &PointCloud,
    max_distance: f64,
    tile: &TileConfig,
) -> Result<CorrespondenceSet, RegistrationError> {
    let nn = brute_force_nn(source, target, tile)?;
    gate(nn, max_distance)
}

fn estimate_correspondences_with(
    backend: NnBackend,
    prebuilt_tree: Option<&KdTree>,
    source: &PointCloud,
    target: &PointCloud,
    max_distance: f64,
    tile: &TileConfig,
) -> Result<CorrespondenceSet, RegistrationError> {
    let nn = match backend {
        NnBackend::Parallel => brute_force_nn(source, target, tile)?,
        NnBackend::Naive => naive_nn(source, target)?,
        NnBackend::KdTree => {
            let owned;
            let tree = match prebuilt_tree {
                Some(t) => t,
                None => {
                    owned = KdTree::build(target)?;
                    &owned
                }
            };
            if source.is_empty() {
                return Err(NnError::EmptyCloud.into());
            }
            source
                .iter()
                .enumerate()
                .map(|(source_index, p)| {
                    let n = tree.nn(p);
                    NnResult {
                        source_index,
                        target_index: n.target_index,
                        squared_distance: n.squared_distance,
                    }
                })
                .collect()
        }
    };
    gate(nn, max_distance)
}

fn gate(
    nn: Vec<NnResult>,
    max_distance: f64,
) -> Result<CorrespondenceSet, RegistrationError> {
    let gate = max_distance * max_distance;
    let pairs: Vec<Correspondence> = nn
        .into_iter()
        .filter(|r| r.squared_distance <= gate)
        .collect();
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(RegistrationError::DegenerateCorrespondences {
            found: pairs.len(),
        });
    }
    Ok(CorrespondenceSet { pairs })
}

/// Sum of squared residuals `‖q_i − (R·p_i + t)‖²` over the pairs.
pub fn alignment_cost(
    source: &PointCloud,
    target: &PointCloud,
    pairs: &[Correspondence],
    transform: &RigidTransform,
) -> f64 {
    pairs
        .iter()
        .map(|c| {
            let moved = transform.transform_point(&source[c.source_index]);
            crate::geometry::squared_distance(&target[c.target_index], &moved)
        })
        .sum()
}

/// Closed-form least-squares rigid motion for a gated correspondence set.
///
/// Centroids of the matched subsets are removed, the 3×3 cross-covariance
/// `H = Σ (p_i − p̄)(q_i − q̄)ᵀ` is accumulated, and `H = UΣVᵀ` yields
/// `R = V·diag(1, 1, det(VUᵀ))·Uᵀ` (the sign flip rejects reflections) and
/// `t = q̄ − R·p̄`.
///
/// When the two smallest singular values both vanish relative to the largest,
/// the pairs are (numerically) collinear and the rotation is unobservable;
/// that is reported as an error rather than guessed around.
pub fn estimate_transform(
    source: &PointCloud,
    target: &PointCloud,
    correspondences: &CorrespondenceSet,
) -> Result<RigidTransform, RegistrationError> {
    let pairs = correspondences.pairs();
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(RegistrationError::DegenerateCorrespondences {
            found: pairs.len(),
        });
    }

    let n = pairs.len() as f64;
    let mut p_centroid = Vector3::zeros();
    let mut q_centroid = Vector3::zeros();
    for c in pairs {
        p_centroid += source[c.source_index].to_vector();
        q_centroid += target[c.target_index].to_vector();
    }
    p_centroid /= n;
    q_centroid /= n;

    let mut h = Matrix3::zeros();
    for c in pairs {
        let p = source[c.source_index].to_vector() - p_centroid;
        let q = target[c.target_index].to_vector() - q_centroid;
        h += p * q.transpose();
    }

    let Svd3 { u, sigma, v } = Svd3::decompose(&h);
    if sigma[1] < DEGENERATE_SINGULAR_REL_TOL * sigma[0]
        && sigma[2] < DEGENERATE_SINGULAR_REL_TOL * sigma[0]
    {
        return Err(RegistrationError::DegenerateGeometry {
            sigma0: sigma[0],
            sigma1: sigma[1],
            sigma2: sigma[2],
        });
    }

    let sign = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    let translation = q_centroid - rotation * p_centroid;
    Ok(RigidTransform::new(rotation, translation)?)
}

/// Full ICP with the default (tiled parallel) engine; see
/// [`align_with_backend`].
pub fn align(
    source: &PointCloud,
    target: &PointCloud,
    config: &IcpConfig,
) -> Result<IcpResult, RegistrationError> {
    align_with_backend(source, target, config, NnBackend::from_env_or_default())
}

/// Full ICP loop.
///
/// The initial transform is applied to the source once, then each iteration
/// estimates gated correspondences, solves for the incremental transform,
/// updates the working source, and left-composes into the cumulative
/// transform. Iteration stops when [`transform_delta`] of the incremental
/// transform falls below the epsilon (converged) or the iteration cap is
/// reached (not converged).
///
/// The backend only changes how nearest neighbors are found; results are
/// identical across backends.
pub fn align_with_backend(
    source: &PointCloud,
    target: &PointCloud,
    config: &IcpConfig,
    backend: NnBackend,
) -> Result<IcpResult, RegistrationError> {
    if source.is_empty() || target.is_empty() {
        return Err(RegistrationError::EmptyCloud);
    }
    config.validate()?;

    let tree = match backend {
        NnBackend::KdTree => Some(KdTree::build(target)?),
        _ => None,
    };

    let mut working = apply_transform(source, &config.initial_transform)?;
    let mut cumulative = config.initial_transform;
    let mut per_iteration: Vec<IterationRecord> = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let started = Instant::now();
        let step = (|| -> Result<(CorrespondenceSet, RigidTransform), RegistrationError> {
            let corr = estimate_correspondences_with(
                backend,
                tree.as_ref(),
                &working,
                target,
                config.max_correspondence_distance,
                &config.tile,
            )?;
            let t = estimate_transform(&working, target, &corr)?;
            Ok((corr, t))
        })();
        let (corr, increment) = step.map_err(|e| RegistrationError::AtIteration {
            iteration,
            source: Box::new(e),
        })?;

        working = apply_transform(&working, &increment)?;
        cumulative = compose(&increment, &cumulative);
        let cost = alignment_cost_post_update(&working, target, corr.pairs());
        per_iteration.push(IterationRecord {
            transform: increment,
            cost,
            inlier_count: corr.inlier_count(),
            wall_time: started.elapsed(),
        });

        if transform_delta(&increment) < config.transformation_epsilon {
            converged = true;
            break;
        }
    }

    let last = per_iteration
        .last()
        .expect("max_iterations >= 1 guarantees at least one iteration");
    let fitness_rmse = (last.cost / last.inlier_count as f64).sqrt();

    Ok(IcpResult {
        final_transform: cumulative,
        converged,
        iterations_run: per_iteration.len(),
        fitness_rmse,
        per_iteration,
    })
}

/// Residual sum over pairs whose source side has already been moved by the
/// iteration's transform; bit-identical to [`alignment_cost`] evaluated on
/// the pre-update cloud.
fn alignment_cost_post_update(
    updated_source: &PointCloud,
    target: &PointCloud,
    pairs: &[Correspondence],
) -> f64 {
    pairs
        .iter()
        .map(|c| {
            crate::geometry::squared_distance(
                &target[c.target_index],
                &updated_source[c.source_index],
            )
        })
        .sum()
}

/// Fluent, stateful registration API.
///
/// Setters may be called in any order and overwrite their field;
/// `align` requires both clouds to be set. In accelerator-backed deployments
/// of this API, `hardware_initialize` programs the device; here it selects
/// which software search engine serves `align`.
///
/// ```
/// use fpps_core::{IterativeClosestPoint, PointCloud, geometry::Point3};
///
/// let cloud = PointCloud::new(vec![
///     Point3::new(0.0, 0.0, 0.0),
///     Point3::new(1.0, 0.0, 0.0),
///     Point3::new(0.0, 1.0, 0.0),
///     Point3::new(0.0, 0.0, 1.0),
/// ]);
/// let mut icp = IterativeClosestPoint::new();
/// icp.set_input_source(cloud.clone())
///     .set_input_target(cloud)
///     .set_max_iteration_count(10);
/// let result = icp.align().unwrap();
/// assert!(result.converged);
/// ```
#[derive(Debug, Clone)]
pub struct IterativeClosestPoint {
    source: Option<PointCloud>,
    target: Option<PointCloud>,
    config: IcpConfig,
    backend: NnBackend,
}

impl IterativeClosestPoint {
    /// A facade with default config; the backend comes from `FPPS_BACKEND`
    /// when set, otherwise the tiled parallel engine.
    pub fn new() -> Self {
        Self {
            source: None,
            target: None,
            config: IcpConfig::default(),
            backend: NnBackend::from_env_or_default(),
        }
    }

    /// Selects the search engine serving subsequent `align` calls.
    pub fn hardware_initialize(&mut self, backend: NnBackend) -> &mut Self {
        self.backend = backend;
        self
    }

    pub fn set_input_source(&mut self, cloud: PointCloud) -> &mut Self {
        self.source = Some(cloud);
        self
    }

    pub fn set_input_target(&mut self, cloud: PointCloud) -> &mut Self {
        self.target = Some(cloud);
        self
    }

    /// Initial transform, applied to the source once before iterating.
    pub fn set_transformation_matrix(&mut self, transform: RigidTransform) -> &mut Self {
        self.config.initial_transform = transform;
        self
    }

    pub fn set_max_correspondence_distance(&mut self, meters: f64) -> &mut Self {
        self.config.max_correspondence_distance = meters;
        self
    }

    pub fn set_max_iteration_count(&mut self, iterations: usize) -> &mut Self {
        self.config.max_iterations = iterations;
        self
    }

    pub fn set_transformation_epsilon(&mut self, epsilon: f64) -> &mut Self {
        self.config.transformation_epsilon = epsilon;
        self
    }

    pub fn set_tile_config(&mut self, tile: TileConfig) -> &mut Self {
        self.config.tile = tile;
        self
    }

    pub fn backend(&self) -> NnBackend {
        self.backend
    }

    pub fn config(&self) -> &IcpConfig {
        &self.config
    }

    /// Runs the alignment; errors list the fields still missing if the
    /// facade is not fully configured.
    pub fn align(&self) -> Result<IcpResult, RegistrationError> {
        let mut missing = Vec::new();
        if self.source.is_none() {
            missing.push("source");
        }
        if self.target.is_none() {
            missing.push("target");
        }
        if !missing.is_empty() {
            return Err(RegistrationError::NotConfigured { missing });
        }
        align_with_backend(
            self.source.as_ref().unwrap(),
            self.target.as_ref().unwrap(),
            &self.config,
            self.backend,
        )
    }
}

impl Default for IterativeClosestPoint {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng, max_t: f64, max_angle: f64) -> RigidTransform {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-9 { Vector3::z() } else { axis };
        let angle = rng.gen_range(-max_angle..max_angle);
        let t = Vector3::new(
            rng.gen_range(-max_t..max_t),
            rng.gen_range(-max_t..max_t),
            rng.gen_range(-max_t..max_t),
        );
        RigidTransform::from_parts(axis, angle, t)
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> PointCloud {
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

    fn perfect_pairs(n: usize) -> CorrespondenceSet {
        CorrespondenceSet {
            pairs: (0..n)
                .map(|i| Correspondence {
                    source_index: i,
                    target_index: i,
                    squared_distance: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn correspondences_identical_clouds_none_filtered() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cloud = random_cloud(&mut rng, 64, 10.0);
        let corr =
            estimate_correspondences(&cloud, &cloud, 1.0, &TileConfig::default()).unwrap();
        assert_eq!(corr.inlier_count(), 64);
        for (i, c) in corr.pairs().iter().enumerate() {
            assert_eq!(c.source_index, i);
            assert_eq!(c.target_index, i);
            assert_eq!(c.squared_distance, 0.0);
        }
    }

    #[test]
    fn gate_filters_and_degenerates() {
        let source = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
        ]);
        let target = PointCloud::new(vec![Point3::new(0.5, 0.0, 0.0)]);
        let err = estimate_correspondences(&source, &target, 1.0, &TileConfig::default())
            .unwrap_err();
        assert!(matches!(
            err,
            RegistrationError::DegenerateCorrespondences { found: 1 }
        ));
    }

    #[test]
    fn gate_matches_naive_oracle_with_same_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let source = random_cloud(&mut rng, 512, 12.0);
        let target = random_cloud(&mut rng, 2048, 12.0);
        let max_dist = 1.0;
        let corr =
            estimate_correspondences(&source, &target, max_dist, &TileConfig::default()).unwrap();
        let oracle: Vec<Correspondence> = naive_nn(&source, &target)
            .unwrap()
            .into_iter()
            .filter(|r| r.squared_distance <= max_dist * max_dist)
            .collect();
        assert_eq!(corr.pairs(), &oracle[..]);
    }

    #[test]
    fn estimate_transform_identity_for_self_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let cloud = random_cloud(&mut rng, 32, 5.0);
        let t = estimate_transform(&cloud, &cloud, &perfect_pairs(32)).unwrap();
        assert!(transform_delta(&t) < 1e-12);
    }

    #[test]
    fn estimate_transform_pure_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let source = random_cloud(&mut rng, 16, 5.0);
        let motion = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let target = apply_transform(&source, &motion).unwrap();
        let t = estimate_transform(&source, &target, &perfect_pairs(16)).unwrap();
        assert!((t.rotation() - Matrix3::identity()).norm() < 1e-10);
        assert_relative_eq!(*t.translation(), Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-10);
    }

    #[test]
    fn estimate_transform_recovers_random_motion_and_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..10 {
            let source = random_cloud(&mut rng, 64, 8.0);
            let motion = random_transform(&mut rng, 3.0, 1.0);
            let target = apply_transform(&source, &motion).unwrap();
            let corr = perfect_pairs(64);
            let t = estimate_transform(&source, &target, &corr).unwrap();
            assert!((t.rotation() - motion.rotation()).norm() < 1e-8);
            assert!((t.translation() - motion.translation()).norm() < 1e-8);

            let optimal = alignment_cost(&source, &target, corr.pairs(), &t);
            for _ in 0..50 {
                let jitter = random_transform(&mut rng, 1e-3, 1e-3);
                let perturbed = compose(&jitter, &t);
                let cost = alignment_cost(&source, &target, corr.pairs(), &perturbed);
                assert!(cost + 1e-15 >= optimal);
            }
        }
    }

    #[test]
    fn estimate_transform_rejects_collinear_points() {
        let source: PointCloud = (0..10)
            .map(|i| Point3::new(i as f64, 0.0, 0.0))
            .collect();
        let err = estimate_transform(&source, &source, &perfect_pairs(10)).unwrap_err();
        assert!(matches!(err, RegistrationError::DegenerateGeometry { .. }));
    }

    #[test]
    fn estimate_transform_handles_planar_points_with_proper_rotation() {
        // Coplanar points leave one singular value at zero; the reflection
        // correction must still produce det(R) = +1.
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..20 {
            let source: PointCloud = (0..32)
                .map(|_| Point3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0))
                .collect();
            let motion = random_transform(&mut rng, 2.0, 1.0);
            let target = apply_transform(&source, &motion).unwrap();
            let t = estimate_transform(&source, &target, &perfect_pairs(32)).unwrap();
            assert_relative_eq!(t.rotation().determinant(), 1.0, epsilon = 1e-9);
            assert!((t.rotation() - motion.rotation()).norm() < 1e-7);
        }
    }

    #[test]
    fn align_identical_clouds_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cloud = random_cloud(&mut rng, 128, 10.0);
        let result = align_with_backend(
            &cloud,
            &cloud,
            &IcpConfig::default(),
            NnBackend::Parallel,
        )
        .unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations_run, 1);
        // The SVD step reproduces the identity to machine precision.
        assert!(result.fitness_rmse <= 1e-12);
        assert!(transform_delta(&result.final_transform) < 1e-12);
    }

    #[test]
    fn align_recovers_small_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let source = random_cloud(&mut rng, 512, 10.0);
        let motion = random_transform(&mut rng, 0.3, 5f64.to_radians());
        let target = apply_transform(&source, &motion).unwrap();
        let result =
            align_with_backend(&source, &target, &IcpConfig::default(), NnBackend::Parallel)
                .unwrap();
        assert!(result.converged);
        let t = result.final_transform;
        assert!((t.rotation() - motion.rotation()).norm() < 1e-4);
        assert!((t.translation() - motion.translation()).norm() < 1e-4);
    }

    #[test]
    fn align_cost_non_increasing_under_perfect_correspondences() {
        // Widely separated points and a small motion keep every NN pair a
        // ground-truth pair, so the per-iteration cost must not increase.
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let source: PointCloud = (0..27)
            .map(|i| {
                let (x, y, z) = (i % 3, (i / 3) % 3, i / 9);
                Point3::new(
                    x as f64 * 20.0 + rng.gen_range(-0.5..0.5),
                    y as f64 * 20.0 + rng.gen_range(-0.5..0.5),
                    z as f64 * 20.0 + rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let motion = random_transform(&mut rng, 0.2, 0.01);
        let target = apply_transform(&source, &motion).unwrap();
        let config = IcpConfig {
            max_correspondence_distance: 30.0,
            transformation_epsilon: 0.0,
            max_iterations: 10,
            ..IcpConfig::default()
        };
        let result =
            align_with_backend(&source, &target, &config, NnBackend::Parallel).unwrap();
        for w in result.per_iteration.windows(2) {
            assert!(w[1].cost <= w[0].cost * (1.0 + 1e-12) + 1e-18);
        }
    }

    #[test]
    fn align_engines_produce_identical_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let source = random_cloud(&mut rng, 256, 8.0);
        let motion = random_transform(&mut rng, 0.4, 0.1);
        let target = apply_transform(&source, &motion).unwrap();
        let config = IcpConfig::default();

        let reference = align_with_backend(&source, &target, &config, NnBackend::Parallel)
            .unwrap();
        for backend in [NnBackend::Naive, NnBackend::KdTree] {
            let other = align_with_backend(&source, &target, &config, backend).unwrap();
            assert_eq!(other.converged, reference.converged);
            assert_eq!(other.iterations_run, reference.iterations_run);
            assert_eq!(other.fitness_rmse, reference.fitness_rmse);
            assert_eq!(
                other.final_transform.to_homogeneous(),
                reference.final_transform.to_homogeneous()
            );
            for (a, b) in other.per_iteration.iter().zip(&reference.per_iteration) {
                assert_eq!(a.transform, b.transform);
                assert_eq!(a.cost, b.cost);
                assert_eq!(a.inlier_count, b.inlier_count);
            }
        }
    }

    #[test]
    fn align_propagates_iteration_number_on_degeneracy() {
        // Two clouds that drift out of gate range cannot occur mid-loop here,
        // so force failure at iteration 1 with an impossible gate.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let source = random_cloud(&mut rng, 16, 5.0);
        let target: PointCloud = source
            .iter()
            .map(|p| Point3::new(p.x + 100.0, p.y, p.z))
            .collect();
        let err = align_with_backend(
            &source,
            &target,
            &IcpConfig::default(),
            NnBackend::Parallel,
        )
        .unwrap_err();
        match err {
            RegistrationError::AtIteration { iteration, source } => {
                assert_eq!(iteration, 1);
                assert!(matches!(
                    *source,
                    RegistrationError::DegenerateCorrespondences { .. }
                ));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn align_rejects_empty_and_invalid_config() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
        assert!(matches!(
            align_with_backend(
                &PointCloud::default(),
                &cloud,
                &IcpConfig::default(),
                NnBackend::Parallel
            ),
            Err(RegistrationError::EmptyCloud)
        ));
        let bad = IcpConfig {
            max_correspondence_distance: 0.0,
            ..IcpConfig::default()
        };
        assert!(matches!(
            align_with_backend(&cloud, &cloud, &bad, NnBackend::Parallel),
            Err(RegistrationError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn facade_defaults_match_direct_align() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let source = random_cloud(&mut rng, 128, 6.0);
        let motion = random_transform(&mut rng, 0.2, 0.05);
        let target = apply_transform(&source, &motion).unwrap();

        let direct = align_with_backend(
            &source,
            &target,
            &IcpConfig::default(),
            NnBackend::Parallel,
        )
        .unwrap();

        let mut icp = IterativeClosestPoint::new();
        icp.hardware_initialize(NnBackend::Parallel)
            .set_input_source(source.clone())
            .set_input_target(target.clone());
        let via_facade = icp.align().unwrap();

        assert_eq!(
            via_facade.final_transform.to_homogeneous(),
            direct.final_transform.to_homogeneous()
        );
        assert_eq!(via_facade.iterations_run, direct.iterations_run);
        assert_eq!(via_facade.fitness_rmse, direct.fitness_rmse);
    }

    #[test]
    fn facade_single_iteration_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let source = random_cloud(&mut rng, 64, 6.0);
        let motion = random_transform(&mut rng, 0.5, 0.2);
        let target = apply_transform(&source, &motion).unwrap();
        let mut icp = IterativeClosestPoint::new();
        icp.hardware_initialize(NnBackend::Parallel)
            .set_input_source(source)
            .set_input_target(target)
            .set_max_iteration_count(1);
        let result = icp.align().unwrap();
        assert_eq!(result.per_iteration.len(), 1);
    }

    #[test]
    fn facade_initial_transform_on_identical_clouds() {
        // A near-identity initial transform on identical clouds: the first
        // iteration estimates (numerically) its inverse, converges, and the
        // final transform lands back at the initial transform up to the
        // estimation residual. Expected value composed by hand.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let cloud = random_cloud(&mut rng, 64, 6.0);
        let t0 = RigidTransform::from_parts(
            Vector3::z(),
            1e-7,
            Vector3::new(1e-7, -1e-7, 0.0),
        );

        let moved = apply_transform(&cloud, &t0).unwrap();
        let expected_step =
            estimate_transform(&moved, &cloud, &perfect_pairs(64)).unwrap();
        let expected_final = compose(&expected_step, &t0);

        let mut icp = IterativeClosestPoint::new();
        icp.hardware_initialize(NnBackend::Parallel)
            .set_input_source(cloud.clone())
            .set_input_target(cloud)
            .set_transformation_matrix(t0);
        let result = icp.align().unwrap();
        assert!(result.converged);
        assert!(
            (result.final_transform.to_homogeneous() - expected_final.to_homogeneous()).norm()
                < 1e-12
        );
        assert!((result.final_transform.to_homogeneous() - t0.to_homogeneous()).norm() < 1e-6);
    }

    #[test]
    fn facade_errors_list_missing_fields() {
        let icp = IterativeClosestPoint::new();
        match icp.align() {
            Err(RegistrationError::NotConfigured { missing }) => {
                assert_eq!(missing, vec!["source", "target"]);
            }
            other => panic!("unexpected: {other:?}"),
        }

        let mut icp = IterativeClosestPoint::new();
        icp.set_input_source(PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]));
        match icp.align() {
            Err(RegistrationError::NotConfigured { missing }) => {
                assert_eq!(missing, vec!["target"]);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }
}
