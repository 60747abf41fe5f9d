//! Exact nearest-neighbor search over a target cloud.
//!
//! The primary path is [`brute_force_nn`]: an exact, tiled, data-parallel
//! kernel organized as the four stages of a streaming pipeline —
//!
//! 1. **batch load**: a tile of source points is staged as the working batch
//!    (the register buffer);
//! 2. **distance scan**: the target cloud streams through strided partitions
//!    ("lanes"), each lane holding a running-minimum register per batch point
//!    that updates only on strictly smaller distance;
//! 3. **comparison tree**: per source point, the per-lane minima compete in a
//!    pairwise tournament;
//! 4. **emission**: winners stream out in source order.
//!
//! Tiling is purely a performance knob: for any valid [`TileConfig`] the
//! results are identical, bit for bit, to a naive double loop and to the
//! exact k-d tree in [`kdtree`]. All three share one distance function and
//! one tie-break rule (smallest target index on equal distance).

mod kdtree;

pub use kdtree::{KdTree, Neighbor};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{squared_distance, Point3, PointCloud};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("target cloud has {size} points, exceeding the configured capacity of {capacity}")]
    CapacityExceeded { size: usize, capacity: usize },
    #[error("invalid tile config: {reason}")]
    InvalidTileConfig { reason: &'static str },
    #[error("unknown NN backend `{name}` (expected `parallel`, `naive`, or `kdtree`)")]
    UnknownBackend { name: String },
}

/// One nearest-neighbor answer: for `source_index`, the globally closest
/// target point (ties broken by smallest target index) and the exact squared
/// Euclidean distance between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnResult {
    pub source_index: usize,
    pub target_index: usize,
    pub squared_distance: f64,
}

/// Shape of the tiled kernel: how many source points are staged per batch,
/// how many parallel lanes the target streams across, and the maximum target
/// size the kernel accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    /// Source points staged per batch (the local register buffer).
    pub source_tile_size: usize,
    /// Parallel target lanes; the target cloud is strided across them.
    pub target_partitions: usize,
    /// Maximum admissible target cloud size.
    pub target_capacity: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            source_tile_size: 256,
            target_partitions: 16,
            target_capacity: 131_072,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.source_tile_size == 0 {
            return Err(NnError::InvalidTileConfig {
                reason: "source_tile_size must be at least 1",
            });
        }
        if self.target_partitions == 0 {
            return Err(NnError::InvalidTileConfig {
                reason: "target_partitions must be at least 1",
            });
        }
        if self.target_capacity == 0 {
            return Err(NnError::InvalidTileConfig {
                reason: "target_capacity must be at least 1",
            });
        }
        Ok(())
    }
}

/// Which search engine serves correspondence estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnBackend {
    /// The tiled data-parallel kernel.
    #[default]
    Parallel,
    /// Single-threaded double loop.
    Naive,
    /// Exact k-d tree with backtracking.
    KdTree,
}

impl NnBackend {
    pub const ALL: [NnBackend; 3] = [NnBackend::Parallel, NnBackend::Naive, NnBackend::KdTree];

    /// Reads `FPPS_BACKEND`, falling back to `parallel` when unset. An
    /// unparseable value is reported and ignored rather than failing a
    /// library call on ambient state.
    pub fn from_env_or_default() -> Self {
        match std::env::var("FPPS_BACKEND") {
            Ok(value) => value.parse().unwrap_or_else(|e| {
                log::warn!("ignoring FPPS_BACKEND: {e}");
                Self::Parallel
            }),
            Err(_) => Self::Parallel,
        }
    }
}

impl std::str::FromStr for NnBackend {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, NnError> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" => Ok(Self::Parallel),
            "naive" => Ok(Self::Naive),
            "kdtree" => Ok(Self::KdTree),
            _ => Err(NnError::UnknownBackend {
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for NnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Parallel => "parallel",
            Self::Naive => "naive",
            Self::KdTree => "kdtree",
        })
    }
}

/// MIN block: the register updates only on strictly smaller distance, so with
/// in-order streaming the first (lowest-index) candidate wins ties.
#[inline(always)]
fn min_update(register: &mut (f64, usize), dist: f64, index: usize) {
    if dist < register.0 {
        *register = (dist, index);
    }
}

/// Lexicographic winner: smaller distance, then smaller target index.
#[inline(always)]
fn closer(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Pairwise tournament over the per-lane minima, in place.
fn comparison_tree(level: &mut [(f64, usize)]) -> (f64, usize) {
    let mut width = level.len();
    while width > 1 {
        let half = width / 2;
        for i in 0..half {
            level[i] = closer(level[2 * i], level[2 * i + 1]);
        }
        if width % 2 == 1 {
            level[half] = level[width - 1];
        }
        width = half + width % 2;
    }
    level[0]
}

/// Exact nearest neighbor of every source point in the target cloud.
///
/// One result per source point, in source order. Parallelism runs across
/// source tiles; the per-lane scan order and the tournament order are fixed,
/// so the output is deterministic regardless of worker count and identical
/// for every valid `TileConfig`.
pub fn brute_force_nn(
    source: &PointCloud,
    target: &PointCloud,
    cfg: &TileConfig,
) -> Result<Vec<NnResult>, NnError> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(NnError::EmptyCloud);
    }
    if target.len() > cfg.target_capacity {
        return Err(NnError::CapacityExceeded {
            size: target.len(),
            capacity: cfg.target_capacity,
        });
    }

    let src = source.points();
    let tgt = target.points();
    let tile = cfg.source_tile_size;
    let lanes = cfg.target_partitions;

    let mut out = vec![
        NnResult {
            source_index: 0,
            target_index: 0,
            squared_distance: 0.0,
        };
        src.len()
    ];

    out.par_chunks_mut(tile)
        .zip(src.par_chunks(tile))
        .enumerate()
        .for_each(|(tile_index, (out_tile, batch))| {
            process_tile(tile_index * tile, batch, tgt, lanes, out_tile);
        });

    Ok(out)
}

/// Runs the four pipeline stages for one source batch.
fn process_tile(
    base_index: usize,
    batch: &[Point3],
    target: &[Point3],
    lanes: usize,
    out: &mut [NnResult],
) {
    // Stage 1: `batch` is the staged register buffer for this tile.
    //
    // Stage 2: stream each lane's strided slice of the target past the whole
    // batch. Lane `l` owns target indices l, l+lanes, l+2·lanes, …; each
    // (point, lane) pair keeps a MIN register. Lanes with no candidates stay
    // at the +inf sentinel and lose every comparison.
    let mut minima = vec![(f64::INFINITY, usize::MAX); batch.len() * lanes];
    for lane in 0..lanes {
        let mut t = lane;
        while t < target.len() {
            let candidate = &target[t];
            for (b, query) in batch.iter().enumerate() {
                let d = squared_distance(query, candidate);
                min_update(&mut minima[b * lanes + lane], d, t);
            }
            t += lanes;
        }
    }

    // Stages 3 and 4: tournament per source point, emit in batch order.
    for (b, slot) in out.iter_mut().enumerate() {
        let row = &mut minima[b * lanes..(b + 1) * lanes];
        let (squared_distance, target_index) = comparison_tree(row);
        *slot = NnResult {
            source_index: base_index + b,
            target_index,
            squared_distance,
        };
    }
}

/// Reference double loop: same distance function, same strict-< update, no
/// tiling and no parallelism.
pub fn naive_nn(source: &PointCloud, target: &PointCloud) -> Result<Vec<NnResult>, NnError> {
    if source.is_empty() || target.is_empty() {
        return Err(NnError::EmptyCloud);
    }
    let results = source
        .iter()
        .enumerate()
        .map(|(source_index, query)| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (t, candidate) in target.iter().enumerate() {
                let d = squared_distance(query, candidate);
                min_update(&mut best, d, t);
            }
            NnResult {
                source_index,
                target_index: best.1,
                squared_distance: best.0,
            }
        })
        .collect();
    Ok(results)
}

/// Instrumented single-lane scan: the running-minimum register after each
/// streamed candidate, using the kernel's update rule.
#[cfg(test)]
fn lane_trace(query: &Point3, target: &[Point3], lane: usize, lanes: usize) -> Vec<(f64, usize)> {
    let mut register = (f64::INFINITY, usize::MAX);
    let mut trace = Vec::new();
    let mut t = lane;
    while t < target.len() {
        let d = squared_distance(query, &target[t]);
        min_update(&mut register, d, t);
        trace.push(register);
        t += lanes;
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    #[test]
    fn self_match_has_zero_distance() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(-2.0, 0.5, 3.0),
            Point3::new(4.0, -4.0, 0.1),
            Point3::new(0.0, 7.0, -1.0),
        ]);
        let results = brute_force_nn(&cloud, &cloud, &TileConfig::default()).unwrap();
        for (i, r) in results.iter().enumerate() {
            assert_eq!(r.source_index, i);
            assert_eq!(r.target_index, i);
            assert_eq!(r.squared_distance, 0.0);
        }
    }

    #[test]
    fn hand_countable_nearest() {
        let source = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
        let target = PointCloud::new(vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.0, 0.0, 3.0),
        ]);
        let results = brute_force_nn(&source, &target, &TileConfig::default()).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].target_index, 0);
        assert_eq!(results[0].squared_distance, 1.0);
    }

    #[test]
    fn matches_naive_double_loop_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let source = random_cloud(&mut rng, 512, 50.0);
        let target = random_cloud(&mut rng, 4096, 50.0);
        let tiled = brute_force_nn(&source, &target, &TileConfig::default()).unwrap();
        let naive = naive_nn(&source, &target).unwrap();
        assert_eq!(tiled, naive);
    }

    #[test]
    fn tile_config_never_changes_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let source = random_cloud(&mut rng, 300, 10.0);
        let target = random_cloud(&mut rng, 1000, 10.0);
        let reference = naive_nn(&source, &target).unwrap();
        for (tile, lanes) in [(1, 1), (7, 3), (256, 16), (300, 1000), (1024, 64), (13, 13)] {
            let cfg = TileConfig {
                source_tile_size: tile,
                target_partitions: lanes,
                target_capacity: 131_072,
            };
            let got = brute_force_nn(&source, &target, &cfg).unwrap();
            assert_eq!(got, reference, "tile={tile} lanes={lanes}");
        }
    }

    #[test]
    fn ties_resolve_to_smallest_target_index() {
        // Four target points all at distance 1 from the query.
        let source = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
        let target = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
        ]);
        for lanes in [1, 2, 3, 4, 7] {
            let cfg = TileConfig {
                source_tile_size: 8,
                target_partitions: lanes,
                target_capacity: 1024,
            };
            let r = brute_force_nn(&source, &target, &cfg).unwrap();
            assert_eq!(r[0].target_index, 0, "lanes={lanes}");
            assert_eq!(r[0].squared_distance, 1.0);
        }
    }

    #[test]
    fn permuting_source_permutes_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let source = random_cloud(&mut rng, 64, 5.0);
        let target = random_cloud(&mut rng, 256, 5.0);
        let base = brute_force_nn(&source, &target, &TileConfig::default()).unwrap();

        let mut perm: Vec<usize> = (0..source.len()).collect();
        // Deterministic Fisher-Yates.
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let permuted: PointCloud = perm.iter().map(|&i| source[i]).collect();
        let got = brute_force_nn(&permuted, &target, &TileConfig::default()).unwrap();
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            assert_eq!(got[new_idx].target_index, base[old_idx].target_index);
            assert_eq!(got[new_idx].squared_distance, base[old_idx].squared_distance);
        }
    }

    #[test]
    fn capacity_and_empty_errors() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0); 10]);
        let cfg = TileConfig {
            source_tile_size: 4,
            target_partitions: 2,
            target_capacity: 9,
        };
        assert!(matches!(
            brute_force_nn(&cloud, &cloud, &cfg),
            Err(NnError::CapacityExceeded {
                size: 10,
                capacity: 9
            })
        ));
        assert!(matches!(
            brute_force_nn(&PointCloud::default(), &cloud, &TileConfig::default()),
            Err(NnError::EmptyCloud)
        ));
        assert!(matches!(
            brute_force_nn(&cloud, &PointCloud::default(), &TileConfig::default()),
            Err(NnError::EmptyCloud)
        ));
    }

    #[test]
    fn rejects_zero_tile_fields() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
        for cfg in [
            TileConfig {
                source_tile_size: 0,
                ..TileConfig::default()
            },
            TileConfig {
                target_partitions: 0,
                ..TileConfig::default()
            },
            TileConfig {
                target_capacity: 0,
                ..TileConfig::default()
            },
        ] {
            assert!(matches!(
                brute_force_nn(&cloud, &cloud, &cfg),
                Err(NnError::InvalidTileConfig { .. })
            ));
        }
    }

    #[test]
    fn lane_minimum_is_monotone_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let target = random_cloud(&mut rng, 333, 8.0);
        let query = Point3::new(0.3, -0.2, 0.9);
        for lanes in [1, 4, 16] {
            for lane in 0..lanes {
                let trace = lane_trace(&query, target.points(), lane, lanes);
                for w in trace.windows(2) {
                    assert!(w[1].0 <= w[0].0, "running minimum increased");
                }
            }
        }
    }

    #[test]
    fn backend_parsing() {
        assert_eq!("parallel".parse::<NnBackend>().unwrap(), NnBackend::Parallel);
        assert_eq!("NAIVE".parse::<NnBackend>().unwrap(), NnBackend::Naive);
        assert_eq!("kdtree".parse::<NnBackend>().unwrap(), NnBackend::KdTree);
        assert!("octree".parse::<NnBackend>().is_err());
        assert_eq!(NnBackend::KdTree.to_string(), "kdtree");
    }
}
