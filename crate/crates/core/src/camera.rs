use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Result};
use crate::se3::Pose;

/// Pinhole camera: intrinsics in pixels, world-to-camera rigid pose.
///
/// Camera space follows the usual vision convention: +x right, +y down,
/// +z forward. Pixel `(u, v)` has its centre at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub world_to_camera: Pose,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, world_to_camera: Pose) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height, world_to_camera };
        cam.validate()?;
        Ok(cam)
    }

    /// Principal point at the image centre and equal focal lengths.
    pub fn centered(focal: f64, width: usize, height: usize, world_to_camera: Pose) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            world_to_camera,
        }
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>, focal: f64, width: usize, height: usize) -> Self {
        Self::centered(focal, width, height, look_at_pose(eye, target, up))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(invalid(format!("focal lengths must be positive ({}, {})", self.fx, self.fy)));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(invalid("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("viewport must be non-empty"));
        }
        self.world_to_camera.validate()
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.rotation()
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.world_to_camera.translation())
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            world_to_camera: self.world_to_camera,
        }
    }
}

/// World-to-camera pose for a camera at `eye` looking towards `target`.
pub fn look_at_pose(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(&up);
    if right.norm() < 1e-9 {
        right = forward.cross(&Vector3::x());
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    // rows are the camera axes expressed in world coordinates
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    Pose::from_parts(&r, &(-(r * eye)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = CameraModel::look_at(
            Vector3::new(1.0, 2.0, -3.0),
            Vector3::new(0.0, 0.5, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            100.0,
            64,
            64,
        );
        cam.validate().unwrap();
        let t = cam.world_to_camera.transform_point(&Vector3::new(0.0, 0.5, 0.0));
        assert!(t.x.abs() < 1e-12 && t.y.abs() < 1e-12 && t.z > 0.0);
        assert!((cam.center() - Vector3::new(1.0, 2.0, -3.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_focal() {
        assert!(CameraModel::new(0.0, 1.0, 0.0, 0.0, 4, 4, Pose::identity()).is_err());
    }
}
