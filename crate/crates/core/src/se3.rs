//! Rigid transforms and the SE(3) exponential / logarithm maps.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Vector3};

use crate::error::{invalid, Error, Result};
use crate::math;

/// Tolerance on rotation-block orthonormality for a valid pose.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Rotations closer than this to π are rejected by [`Pose::log`] callers that need
/// a unique principal logarithm.
pub const PI_MARGIN: f64 = 1e-9;

/// A twist `(ω, v)`: rotation vector followed by translational part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self { omega: Vector3::zeros(), v: Vector3::zeros() }
    }

    pub fn angle(&self) -> f64 {
        self.omega.norm()
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist { omega: self.omega * s, v: self.v * s }
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, o: Twist) -> Twist {
        Twist { omega: self.omega + o.omega, v: self.v + o.v }
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rigid 4×4 homogeneous transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub Matrix4<f64>);

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose(Matrix4::identity())
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
        Pose(m)
    }

    pub fn from_quaternion(q: &Quaternion<f64>, translation: &Vector3<f64>) -> Self {
        Self::from_parts(&math::rotation_matrix(q), translation)
    }

    /// Row-major 16 floats.
    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 16 {
            return Err(invalid(format!("pose needs 16 values, got {}", v.len())));
        }
        let p = Pose(Matrix4::from_row_slice(v));
        p.validate()?;
        Ok(p)
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// Closed-form rigid inverse.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation().transpose();
        Pose::from_parts(&rt, &(-(rt * self.translation())))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        if !m.iter().all(|v| v.is_finite()) {
            return Err(invalid("pose has non-finite entries"));
        }
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(invalid("pose bottom row must be (0,0,0,1)"));
        }
        let r = self.rotation();
        let err = (r.transpose() * r - Matrix3::identity()).amax();
        if err > ORTHONORMAL_TOLERANCE || r.determinant() < 0.0 {
            return Err(invalid(format!("rotation block not orthonormal (error {err:e})")));
        }
        Ok(())
    }

    /// Projects the rotation block back onto SO(3).
    pub fn reorthonormalize(&self) -> Pose {
        let svd = self.rotation().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Pose::from_parts(&r, &self.translation())
    }

    /// Rotation angle in [0, π].
    pub fn angle(&self) -> f64 {
        let q = math::quaternion_from_rotation(&self.rotation());
        2.0 * q.vector().norm().atan2(q.w)
    }

    /// SE(3) exponential.
    pub fn exp(xi: &Twist) -> Pose {
        let theta = xi.omega.norm();
        let w = skew(&xi.omega);
        let w2 = w * w;
        let (a, b, c) = if theta < 1e-3 {
            let t2 = theta * theta;
            (
                1.0 - t2 / 6.0 + t2 * t2 / 120.0,
                0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
            )
        } else {
            let t2 = theta * theta;
            (
                theta.sin() / theta,
                (1.0 - theta.cos()) / t2,
                (theta - theta.sin()) / (t2 * theta),
            )
        };
        let r = Matrix3::identity() + w * a + w2 * b;
        let v = Matrix3::identity() + w * b + w2 * c;
        Pose::from_parts(&r, &(v * xi.v))
    }

    /// Principal SE(3) logarithm (rotation angle in [0, π]).
    pub fn log(&self) -> Twist {
        let q = math::quaternion_from_rotation(&self.rotation());
        let vn = q.vector().norm();
        let theta = 2.0 * vn.atan2(q.w);
        let omega = if vn < 1e-12 {
            // small angle: θ·axis ≈ 2·vec(q)/w
            q.vector() * (2.0 / q.w)
        } else {
            q.vector() * (theta / vn)
        };
        let w = skew(&omega);
        // (1 − (θ/2)·cot(θ/2)) / θ²; the half-angle form avoids cancellation in 1 − cos θ
        let coeff = if theta < 1e-3 {
            let t2 = theta * theta;
            1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
        } else {
            let h = 0.5 * theta;
            (1.0 - h * h.cos() / h.sin()) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
        Twist { omega: omega.into_owned(), v: v_inv * self.translation() }
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose(self.0 * rhs.0)
    }
}

impl Mul for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        Pose(self.0 * rhs.0)
    }
}

/// `exp(Σ β_c log P_c)` over a set of poses with convex weights.
pub fn interpolate_pose(poses: &[Pose], weights: &[f64]) -> Result<Pose> {
    if poses.is_empty() || poses.len() != weights.len() {
        return Err(invalid(format!(
            "{} poses with {} weights",
            poses.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(invalid("weights must lie in [0,1]"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("weights sum to {total}, expected 1")));
    }
    for (i, p) in poses.iter().enumerate() {
        p.validate()?;
        if p.angle() >= std::f64::consts::PI - PI_MARGIN {
            return Err(Error::BranchAmbiguity(format!(
                "pose {i} rotates by π; its logarithm is not unique"
            )));
        }
        for (j, o) in poses.iter().enumerate().skip(i + 1) {
            if (p.inverse() * *o).angle() >= std::f64::consts::PI - PI_MARGIN {
                return Err(Error::BranchAmbiguity(format!(
                    "poses {i} and {j} differ by a rotation of π"
                )));
            }
        }
    }
    let xi = poses
        .iter()
        .zip(weights)
        .fold(Twist::zero(), |acc, (p, b)| acc + p.log() * *b);
    Ok(Pose::exp(&xi).reorthonormalize())
}
