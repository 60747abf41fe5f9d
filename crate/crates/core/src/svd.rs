//! Singular value decomposition for 3×3 matrices via one-sided Jacobi
//! rotations.
//!
//! The registration path only ever decomposes 3×3 cross-covariance matrices,
//! so a fixed-size Jacobi sweep is both sufficient and fully deterministic:
//! the same input always produces bit-identical factors, which the
//! engine-equivalence tests rely on.

use nalgebra::{Matrix3, Vector3};

/// Off-diagonal convergence threshold, relative to the column norms.
const JACOBI_TOL: f64 = 1e-14;
/// Sweep cap; 3×3 problems converge in a handful of sweeps.
const MAX_SWEEPS: usize = 64;
/// Columns with norm below this (relative to the largest singular value) are
/// treated as null directions and rebuilt by orthonormal completion.
const NULL_COLUMN_REL_TOL: f64 = 1e-300;

/// `m = u * diag(sigma) * vᵀ`, singular values sorted descending.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Matrix3<f64>,
    pub sigma: Vector3<f64>,
    pub v: Matrix3<f64>,
}

impl Svd3 {
    /// One-sided Jacobi: right-multiplies plane rotations until the columns
    /// of the working matrix are mutually orthogonal, accumulating them into
    /// `v`; the surviving column norms are the singular values.
    pub fn decompose(m: &Matrix3<f64>) -> Self {
        let mut a = *m;
        let mut v = Matrix3::<f64>::identity();

        for _ in 0..MAX_SWEEPS {
            let mut converged = true;
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let mut g_pp = 0.0;
                let mut g_qq = 0.0;
                let mut g_pq = 0.0;
                for i in 0..3 {
                    g_pp += a[(i, p)] * a[(i, p)];
                    g_qq += a[(i, q)] * a[(i, q)];
                    g_pq += a[(i, p)] * a[(i, q)];
                }
                if g_pq.abs() <= JACOBI_TOL * (g_pp * g_qq).sqrt() {
                    continue;
                }
                converged = false;

                let zeta = (g_qq - g_pp) / (2.0 * g_pq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;

                for i in 0..3 {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;

                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
            if converged {
                break;
            }
        }

        let mut sigma = Vector3::new(a.column(0).norm(), a.column(1).norm(), a.column(2).norm());

        // Sort singular values descending, permuting the factor columns along.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
        let a_sorted = Matrix3::from_columns(&[
            a.column(order[0]).into_owned(),
            a.column(order[1]).into_owned(),
            a.column(order[2]).into_owned(),
        ]);
        let v_sorted = Matrix3::from_columns(&[
            v.column(order[0]).into_owned(),
            v.column(order[1]).into_owned(),
            v.column(order[2]).into_owned(),
        ]);
        sigma = Vector3::new(sigma[order[0]], sigma[order[1]], sigma[order[2]]);

        let u = left_factor(&a_sorted, &sigma);
        Svd3 {
            u,
            sigma,
            v: v_sorted,
        }
    }
}

/// Normalizes the orthogonalized columns into `u`, completing null
/// directions (rank-deficient input) to a proper orthonormal basis.
fn left_factor(a: &Matrix3<f64>, sigma: &Vector3<f64>) -> Matrix3<f64> {
    let floor = sigma[0] * 1e-12 + NULL_COLUMN_REL_TOL;
    let mut cols: [Option<Vector3<f64>>; 3] = [None, None, None];
    for j in 0..3 {
        if sigma[j] > floor {
            cols[j] = Some(a.column(j) / sigma[j]);
        }
    }
    // Descending order means null columns are trailing.
    let u0 = cols[0].unwrap_or_else(Vector3::x);
    let u1 = cols[1].unwrap_or_else(|| orthogonal_to(&u0));
    let u2 = cols[2].unwrap_or_else(|| u0.cross(&u1).normalize());
    Matrix3::from_columns(&[u0, u1, u2])
}

fn orthogonal_to(v: &Vector3<f64>) -> Vector3<f64> {
    // Cross with the axis least aligned with v to avoid cancellation.
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vector3::x()
    } else if v.y.abs() <= v.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&axis).normalize()
}

/// Closest proper rotation to `m` in the Frobenius sense:
/// `U · diag(1, 1, det(U·Vᵀ)) · Vᵀ` from the SVD of `m`.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let Svd3 { u, v, .. } = Svd3::decompose(m);
    let sign = (u * v.transpose()).determinant().signum();
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    u * d * v.transpose()
}
