//! Core geometric types and rigid-body math.
//!
//! All arithmetic is carried out in `f64`, even where the source data is
//! stored as `f32` (KITTI frames): SVD estimation and long chains of
//! transform compositions need the headroom.

use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

use crate::svd::nearest_rotation;

/// Frobenius-norm bound on `RᵀR − I` for a matrix to count as a rotation.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Allowed deviation of `det(R)` from +1.
pub const DETERMINANT_TOL: f64 = 1e-9;
/// Drift threshold above which `compose` re-orthonormalizes the product
/// rotation. Tight enough that up to the ICP iteration cap (50 compositions)
/// the cumulative transform stays well inside the rotation tolerances.
pub const COMPOSE_RENORMALIZE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("rotation is not in SO(3): ||R'R - I||_F = {orthogonality_error:.3e}, det(R) = {determinant:.12}")]
    InvalidRotation {
        orthogonality_error: f64,
        determinant: f64,
    },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point {index} has non-finite coordinates")]
    NonFinitePoint { index: usize },
}

/// A 3D point, coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Squared Euclidean distance with a pinned accumulation order
/// (`x² + y² + z²`, left to right).
///
/// Every search path in the crate — the tiled kernel, the naive scan, and the
/// k-d tree — goes through this one function so their distances are
/// bit-identical and tie-breaking is well defined.
#[inline(always)]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// An ordered set of points. Index `i` always refers to the same physical
/// point for the lifetime of the cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame_id: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            frame_id: None,
        }
    }

    pub fn with_frame_id(points: Vec<Point3>, frame_id: impl Into<String>) -> Self {
        Self {
            points,
            frame_id: Some(frame_id.into()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn frame_id(&self) -> Option<&str> {
        self.frame_id.as_deref()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Validates that every point is finite, reporting the first offender.
    pub fn validate_finite(&self) -> Result<(), GeometryError> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(index) => Err(GeometryError::NonFinitePoint { index }),
            None => Ok(()),
        }
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;
    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// A rigid transform: rotation `R ∈ SO(3)` plus translation `t ∈ R³`.
///
/// Construction always validates the rotation, so a `RigidTransform` in hand
/// satisfies the SO(3) invariants within [`ORTHOGONALITY_TOL`] /
/// [`DETERMINANT_TOL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from its parts, rejecting rotations outside SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let t = Self {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a transform from a possibly drifted rotation by projecting it
    /// onto the nearest proper rotation (polar decomposition). Fails only if
    /// the input is so degenerate that no rotation is recoverable.
    pub fn orthonormalized(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let projected = nearest_rotation(&rotation);
        Self::new(projected, translation)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about an arbitrary axis (Rodrigues), zero translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let axis = axis.normalize();
        let (sin, cos) = angle.sin_cos();
        let k = skew(&axis);
        let rotation = Matrix3::identity() + k * sin + k * k * (1.0 - cos);
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(
        axis: Vector3<f64>,
        angle: f64,
        translation: Vector3<f64>,
    ) -> Self {
        let mut t = Self::from_axis_angle(axis, angle);
        t.translation = translation;
        t
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// `R·p + t`
    #[inline]
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.to_vector() + self.translation)
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let orthogonality_error = self.orthogonality_error();
        let determinant = self.rotation.determinant();
        if orthogonality_error > ORTHOGONALITY_TOL || (determinant - 1.0).abs() > DETERMINANT_TOL {
            return Err(GeometryError::InvalidRotation {
                orthogonality_error,
                determinant,
            });
        }
        Ok(())
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Applies `T` to every point: `out[i] = R·cloud[i] + t`.
///
/// Order and cardinality are preserved. Rejects empty clouds and transforms
/// that have drifted out of SO(3).
pub fn apply_transform(
    cloud: &PointCloud,
    transform: &RigidTransform,
) -> Result<PointCloud, GeometryError> {
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    transform.validate()?;
    let points = cloud
        .iter()
        .map(|p| transform.transform_point(p))
        .collect();
    Ok(PointCloud {
        points,
        frame_id: cloud.frame_id.clone(),
    })
}

/// Product of the homogeneous forms: `compose(a, b)` applies `b` first,
/// then `a`.
///
/// The product rotation is re-orthonormalized (polar projection) when drift
/// exceeds [`COMPOSE_RENORMALIZE_TOL`], so long composition chains cannot
/// walk out of SO(3).
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    let rotation = a.rotation * b.rotation;
    let translation = a.rotation * b.translation + a.translation;
    let candidate = RigidTransform {
        rotation,
        translation,
    };
    if candidate.orthogonality_error() > COMPOSE_RENORMALIZE_TOL {
        RigidTransform {
            rotation: nearest_rotation(&rotation),
            translation,
        }
    } else {
        candidate
    }
}

/// `(Rᵀ, −Rᵀt)`, so that `compose(T, inverse(T))` is the identity.
pub fn inverse(t: &RigidTransform) -> RigidTransform {
    let rotation = t.rotation.transpose();
    RigidTransform {
        rotation,
        translation: -(rotation * t.translation),
    }
}

/// Scalar convergence measure: `max(‖R − I‖_F, ‖t‖₂)`.
///
/// Zero exactly when `T` is the identity; used to decide when a per-iteration
/// ICP increment is small enough to stop.
pub fn transform_delta(t: &RigidTransform) -> f64 {
    let rot_dev = (t.rotation - Matrix3::identity()).norm();
    let trans_norm = t.translation.norm();
    rot_dev.max(trans_norm)
}
