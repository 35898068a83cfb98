//! Quaternion, covariance and Gaussian density helpers.

use nalgebra::{Matrix3, Quaternion, Vector3};

use crate::error::{invalid, Error, Result};

/// Tolerance on `|q| - 1` accepted by [`build_covariance`].
pub const QUAT_NORM_TOLERANCE: f64 = 1e-4;

/// Condition number above which a covariance is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Rotation matrix of a (w, x, y, z) quaternion. The quaternion is normalized first.
pub fn rotation_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Unit quaternion (w, x, y, z) of an orthonormal rotation matrix.
pub fn quaternion_from_rotation(r: &Matrix3<f64>) -> Quaternion<f64> {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let uq = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    let q = uq.into_inner();
    // canonical hemisphere: w >= 0
    if q.w < 0.0 {
        -q
    } else {
        q
    }
}

/// Hamilton product `a * b`.
pub fn quat_mul(a: &Quaternion<f64>, b: &Quaternion<f64>) -> Quaternion<f64> {
    a * b
}

/// Σ = R S Sᵀ Rᵀ for a unit quaternion and per-axis scales.
pub fn build_covariance(rotation: &Quaternion<f64>, scale: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let norm = rotation.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(invalid(format!("quaternion norm {norm} is not unit")));
    }
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(invalid(format!("scales must be positive, got {scale:?}")));
    }
    let m = rotation_matrix(rotation) * Matrix3::from_diagonal(scale);
    Ok(m * m.transpose())
}

/// Unnormalized Gaussian density `exp(-½ xᵀ Σ⁻¹ x)` at offset `x` from the mean.
pub fn eval_gaussian(cov: &Matrix3<f64>, x: &Vector3<f64>) -> Result<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || !lo.is_finite() || hi / lo > MAX_CONDITION {
        return Err(Error::Singular(format!(
            "covariance eigenvalues in [{lo:e}, {hi:e}]"
        )));
    }
    let chol = sym
        .cholesky()
        .ok_or_else(|| Error::Singular("cholesky failed".into()))?;
    let y = chol.l().solve_lower_triangular(x).ok_or_else(|| Error::Singular("triangular solve".into()))?;
    Ok((-0.5 * y.norm_squared()).exp())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
