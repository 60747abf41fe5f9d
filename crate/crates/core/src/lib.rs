//! FPPS: a point cloud registration engine.
//!
//! The crate aligns LiDAR-scale 3D point clouds with classic point-to-point
//! ICP. Nearest-neighbor search runs as an exact, tiled, data-parallel kernel
//! organized like a four-stage streaming pipeline (batch load, per-lane
//! distance scan, comparison-tree reduction, result emission); an exact k-d
//! tree and a naive scan are provided as interchangeable backends for
//! equivalence testing and latency comparison. Transform estimation uses the
//! closed-form SVD solution over distance-gated correspondences.
//!
//! Supporting modules handle KITTI odometry I/O, deterministic sampling,
//! synthetic scene generation, and an analytical throughput/latency model of
//! the streaming pipeline.

pub mod dataflow;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod registration;
pub mod svd;
pub mod synth;

pub use geometry::{
    apply_transform, compose, inverse, transform_delta, GeometryError, Point3, PointCloud,
    RigidTransform,
};
pub use nn::{brute_force_nn, naive_nn, KdTree, NnBackend, NnError, NnResult, TileConfig};
pub use registration::{
    align, align_with_backend, estimate_correspondences, estimate_transform, CorrespondenceSet,
    IcpConfig, IcpResult, IterationRecord, IterativeClosestPoint, RegistrationError,
};
