//! EWA projection of 3D Gaussians into screen-space ellipses.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::gaussians::GaussianSet;
use crate::math::rotation_matrix;
use crate::sh;

/// Splats at or in front of this view-space depth are culled (meters).
pub const NEAR_PLANE: f64 = 0.01;

/// Splats whose centre projects further outside the viewport than this
/// fraction of its size are culled; near the camera plane their footprints
/// blow up and would otherwise cover the whole image.
pub const GUARD_BAND: f64 = 0.3;

/// Low-pass dilation added to the 2D covariance diagonal (pixels²).
pub const LOW_PASS: f64 = 0.3;

/// Per-splat contributions below this alpha are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;

/// A pixel stops accumulating once its transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

/// A Gaussian after projection to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSplat {
    /// Index into the source set.
    pub index: usize,
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    /// Inverse of `cov` as (a, b, c) with power = -½(a dx² + 2b dx dy + c dy²).
    pub conic: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub rgb: [f64; 3],
    /// Half-width of the square that holds every pixel with alpha ≥ [`MIN_ALPHA`].
    pub radius: f64,
    /// Powers below this cannot reach [`MIN_ALPHA`].
    pub(crate) power_floor: f64,
}

impl ProjectedSplat {
    /// Inclusive integer pixel bounds, clipped to the viewport.
    pub fn pixel_bounds(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let x0 = (self.mean.x - self.radius).ceil().max(0.0);
        let x1 = (self.mean.x + self.radius).floor().min(width as f64 - 1.0);
        let y0 = (self.mean.y - self.radius).ceil().max(0.0);
        let y1 = (self.mean.y + self.radius).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
    }

    /// Alpha of this splat at pixel centre `(px, py)`, or `None` when skipped.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> Option<(f64, f64)> {
        let dx = px - self.mean.x;
        let dy = py - self.mean.y;
        let [a, b, c] = self.conic;
        let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
        if power > 0.0 || power < self.power_floor {
            return None;
        }
        let g = power.exp();
        let alpha = self.opacity * g;
        if alpha < MIN_ALPHA {
            return None;
        }
        Some((alpha, g))
    }
}

/// Intermediate quantities of one projection, reused by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ProjectionTerms {
    pub t: Vector3<f64>,
    pub j: Matrix2x3<f64>,
    pub cov_cam: Matrix3<f64>,
    pub view_dir: Vector3<f64>,
    pub view_dist: f64,
    pub raw_rgb: [f64; 3],
}

pub(crate) fn project_one(set: &GaussianSet, cam: &CameraModel, i: usize) -> Option<(ProjectedSplat, ProjectionTerms)> {
    let w = cam.rotation();
    let t = w * set.means[i] + cam.world_to_camera.translation();
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let (u, v) = (cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);
    let (gw, gh) = (GUARD_BAND * cam.width as f64, GUARD_BAND * cam.height as f64);
    if !(u >= -gw && u <= cam.width as f64 + gw && v >= -gh && v <= cam.height as f64 + gh) {
        return None;
    }
    let opacity = set.opacities[i];
    if !(opacity >= MIN_ALPHA) {
        return None;
    }
    let m = rotation_matrix(&set.rotations[i]) * Matrix3::from_diagonal(&set.scales[i]);
    let cov_cam = w * (m * m.transpose()) * w.transpose();
    let (x, y, z) = (t.x, t.y, t.z);
    let j = Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * y / (z * z),
    );
    let cov = j * cov_cam * j.transpose() + Matrix2::identity() * LOW_PASS;
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
    let mean = Vector2::new(u, v);

    let power_floor = -(255.0 * opacity).ln();
    let mid = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    let half = (0.25 * (cov[(0, 0)] - cov[(1, 1)]).powi(2) + cov[(0, 1)].powi(2)).sqrt();
    let lambda_max = mid + half;
    let radius = (2.0 * (255.0 * opacity).ln() * lambda_max).max(0.0).sqrt() * (1.0 + 1e-6) + 1e-6;

    let offset = set.means[i] - cam.center();
    let view_dist = offset.norm();
    let view_dir = if view_dist > 0.0 { offset / view_dist } else { Vector3::z() };
    let raw_rgb = sh::eval_sh_unclamped(set.sh_of(i), &view_dir, set.sh_degree());
    let splat = ProjectedSplat {
        index: i,
        mean,
        cov,
        conic,
        depth: z,
        opacity,
        rgb: raw_rgb.map(|v| v.clamp(0.0, 1.0)),
        radius,
        // a hair below the exact floor so rounding never changes which splats pass
        power_floor: power_floor - 1e-9,
    };
    if splat.pixel_bounds(cam.width, cam.height).is_none() {
        return None;
    }
    Some((splat, ProjectionTerms { t, j, cov_cam, view_dir, view_dist, raw_rgb }))
}

/// Projects every visible splat; culled splats are dropped.
pub fn project(set: &GaussianSet, cam: &CameraModel) -> Vec<ProjectedSplat> {
    (0..set.len())
        .into_par_iter()
        .filter_map(|i| project_one(set, cam, i).map(|(s, _)| s))
        .collect()
}

/// Ascending depth, ties broken by source index.
pub(crate) fn depth_order(a: &ProjectedSplat, b: &ProjectedSplat) -> std::cmp::Ordering {
    a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index))
}
